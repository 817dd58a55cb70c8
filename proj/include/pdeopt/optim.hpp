#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pdeopt/errors.hpp"

namespace pdeopt {

// Loss-and-gradient oracle: returns the loss, writes the gradient.
using GradOracle = std::function<double(std::span<const double>, std::span<double>)>;

struct OptConfig {
    int adam_iters = 20000;
    double adam_lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    int lbfgs_iters = 1000;
    int lbfgs_memory = 10;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    double grad_tol = 0.0;  // stop when ||g|| <= grad_tol

    void validate() const;
};

struct TraceRow {
    int step;
    double loss;
    double grad_norm;
};

struct OptResult {
    std::vector<double> theta;
    double loss = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool line_search_failed = false;  // L-BFGS gave up and returned current best
    long oracle_calls = 0;
    long wolfe_accepted = 0;   // accepted L-BFGS steps
    long wolfe_violations = 0; // accepted steps violating either Wolfe condition (must stay 0)
};

// Standard Adam with bias correction, full-batch, fixed iteration count.
// Throws NumericalError on a non-finite loss, naming the failing step.
OptResult adam_run(const GradOracle& oracle, std::vector<double> theta0, const OptConfig& cfg,
                   std::vector<TraceRow>* trace = nullptr);

// Two-loop-recursion L-BFGS with a strong Wolfe line search. Curvature pairs
// with non-positive y^T s are skipped. On line-search failure falls back to a
// backtracking steepest-descent step; if that also fails, returns the current
// best with line_search_failed set.
OptResult lbfgs_run(const GradOracle& oracle, std::vector<double> theta0, const OptConfig& cfg,
                    std::vector<TraceRow>* trace = nullptr);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace pdeopt
