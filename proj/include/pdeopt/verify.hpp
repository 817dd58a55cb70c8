#pragma once

#include <string>

namespace pdeopt {

struct SuiteResult {
    int passed = 0;
    int failed = 0;
    bool ok() const { return failed == 0; }
};

// Property suites runnable from the CLI and the acceptance harness.
// Names: jets | prox | optim | fem | all.
SuiteResult run_suite(const std::string& name, bool verbose = true);

}  // namespace pdeopt
