#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "pdeopt/pinnsolve.hpp"
#include "pdeopt/problems.hpp"

namespace pdeopt {

struct AdmmConfig {
    Method method = Method::ota;
    std::optional<ScalarField> z0, lambda0;  // default: zero fields
    bool early_stop = false;                 // optional primal-residual stop, off by default
    double primal_tol = 1e-8;
    bool cold_start = false;  // re-initialize networks every outer iteration
    Exec exec = Exec::parallel;
};

struct AdmmState {
    NetSet nets;
    ScalarField z;
    ScalarField lambda;
    int k = 0;
};

struct IterRow {
    int k;
    double primal_residual;  // ||u^{k+1} - z^{k+1}||
    double objective;
    double rel_err;  // vs known truth; NaN when the preset has none
};

struct ConvergenceReport {
    std::vector<IterRow> rows;
    double wall_seconds = 0.0;
    ScalarField u, y, z, lambda;  // final iterate (u masked to the support window)
    bool failed = false;
    std::string failure;
    long wolfe_violations = 0;
    std::uint64_t seed = 0;
};

// lambda^{k+1} = lambda^k - beta (u^{k+1} - z^{k+1}); lattices must match.
ScalarField multiplier_update(const ScalarField& lambda, const ScalarField& u,
                              const ScalarField& z, double beta);

// z-subproblem dispatch for the preset's prox selector (TV prox restricted
// to the omega window when the preset has one).
ScalarField apply_prox(const ProblemSpec& spec, const ScalarField& v);

// Smooth-subproblem solver hook: returns (u, y) lattice fields for given
// (k, z^k, lambda^k). The PINN and Gauss-Newton paths provide instances;
// tests may supply closed-form ones.
using USolver =
    std::function<std::pair<ScalarField, ScalarField>(int, const ScalarField&, const ScalarField&)>;

ConvergenceReport admm_run_custom(const ProblemSpec& spec, const USolver& solver,
                                  const AdmmConfig& cfg, std::uint64_t seed);

// Full driver: PINN inner solver (AtO/OtA) or the Gauss-Newton reference
// (method == reference, ex1 preset).
ConvergenceReport admm_run(const ProblemSpec& spec, const AdmmConfig& cfg, std::uint64_t seed);

double relative_l2_error(const ScalarField& u, const ScalarField& truth);

}  // namespace pdeopt
