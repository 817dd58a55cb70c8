#pragma once

#include "pdeopt/field.hpp"

namespace pdeopt {

// Inner splitting settings for the TV proximal solve. The quadratic term of
// the prox is normalized to 1/2||z-v||^2, so `zeta` is the inner penalty on
// that scale (an outer problem with penalty beta passes zeta_paper/beta).
struct TvConfig {
    double zeta = 5.0;
    int inner_iters = 80;
    // boundary rule: periodic wrap on every axis (fixed)

    void validate() const;
};

// Pointwise clamp to [a, b]; a may be -inf, b may be +inf.
ScalarField project_box(const ScalarField& v, double a, double b);

// Soft-thresholding sgn(v)*(|v|-zeta)_+, the prox of zeta*||.||_1.
ScalarField shrink(const ScalarField& v, double zeta);
double shrink_scalar(double v, double zeta);

// Prox of zeta*||.||_1 + box indicator: project_box(shrink(v, zeta), a, b).
ScalarField prox_sparse_box(const ScalarField& v, double zeta, double a, double b);

// Approximate prox of gamma_over_beta * TV(.) + 1/2||.-v||^2 on a 1D or 2D
// uniform lattice, by an inner splitting on D z = w with D the periodic
// forward difference in lattice units: the z-step solves
// (I + zeta D^T D) z = v + zeta D^T (w + mu/zeta) through the discrete
// Fourier diagonalization of D, the w-step is a componentwise shrink with
// per-axis weight (gamma_over_beta / h_axis) / zeta, and mu takes the
// multiplier update. The lattice-unit splitting keeps the inner iteration's
// conditioning mesh-independent, so a few dozen iterations converge.
ScalarField prox_tv(const ScalarField& v, double gamma_over_beta, const TvConfig& cfg);

// Anisotropic discrete TV: sum over axes of |forward difference| times the
// transverse cell measure (no periodic wrap; objective-side measure).
double discrete_tv(const ScalarField& f);

}  // namespace pdeopt
