#pragma once

#include "pdeopt/nnet.hpp"
#include "pdeopt/optim.hpp"
#include "pdeopt/problems.hpp"

namespace pdeopt {

// Residual-point sets for one outer iteration.
struct SampleSets {
    PointBatch interior;
    PointBatch boundary;  // spatial boundary (ex3: dOmega; ex4: dOmega x (0,T))
    std::vector<std::array<double, kMaxDim>> boundary_normals;  // outward, ex3 only
    PointBatch initial;  // ex4: spatial points, used at t=0 (state) and t=T (adjoint)
};

// Fixed-policy presets return the lattice/grid sets; the resampling preset
// draws fresh uniform points from `rng` (identical seed, identical sets).
SampleSets sample_points(const ProblemSpec& spec, Rng& rng);

// Networks of one subproblem solve. Slot order inside the training loss:
// AtO: [u, y]; OtA ex1: [u, y, p]; OtA reduced (ex2..ex4): [y, p].
struct NetSet {
    Mlp u, y, p;
    bool has_u = false, has_p = false;

    static NetSet create(const ProblemSpec& spec, Method method, Rng& rng);
};

// Loss of Algorithm "approximate-then-optimize": weighted objective samples
// plus mean-squared PDE residuals (and soft boundary/initial blocks where
// the preset has no hard-constraint ansatz).
CompositeLoss assemble_ato_loss(const ProblemSpec& spec, NetSet& nets, const ScalarField& z,
                                const ScalarField& lambda, const SampleSets& samples);

// Loss of Algorithm "optimize-then-approximate": mean-squared residuals of
// the (reduced) first-order optimality system.
CompositeLoss assemble_ota_loss(const ProblemSpec& spec, NetSet& nets, const ScalarField& z,
                                const ScalarField& lambda, const SampleSets& samples);

struct SubproblemResult {
    ScalarField u_lattice;  // control on the reference lattice (unmasked recovery)
    ScalarField y_lattice;  // state on the reference lattice
    double final_loss = 0.0;
    double final_grad_norm = 0.0;
    long wolfe_accepted = 0;
    long wolfe_violations = 0;
    bool line_search_failed = false;
};

// Adam then L-BFGS on the assembled loss, with per-outer-iteration budgets
// from the preset. Trains `nets` in place (warm start across calls).
SubproblemResult solve_subproblem(const ProblemSpec& spec, NetSet& nets, const ScalarField& z,
                                  const ScalarField& lambda, Method method, int outer_iter,
                                  const SampleSets& samples, Exec exec);

// Lattice evaluation helpers.
ScalarField eval_on_lattice(const Mlp& net, const AnsatzSpec& ansatz, const Lattice& lat,
                            Exec exec);
PointBatch lattice_points(const Lattice& lat);

}  // namespace pdeopt
