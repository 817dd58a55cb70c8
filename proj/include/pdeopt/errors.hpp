#pragma once

#include <stdexcept>
#include <string>

namespace pdeopt {

// Invalid configuration, preset key, or argument contract violation.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure at runtime: divergence, singular system, non-finite loss.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pdeopt
