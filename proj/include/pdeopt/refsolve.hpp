#pragma once

#include "pdeopt/field.hpp"

namespace pdeopt {

// Uniform 1D mesh of piecewise-linear elements.
struct Fem1dMesh {
    double lo = 0.0;
    double hi = 1.0;
    int elements = 100;

    int nodes() const { return elements + 1; }
    double h() const { return (hi - lo) / elements; }
    Lattice lattice() const { return Lattice::line(lo, hi, nodes()); }

    void validate() const {
        if (elements < 2) throw ConfigError("fem mesh needs >= 2 elements");
        if (!(hi > lo)) throw ConfigError("fem mesh needs hi > lo");
    }
};

// Galerkin solve of -nu y'' + u y = f, y(lo)=y(hi)=0, with lumped mass for
// the zero-order and load terms (tridiagonal system).
ScalarField fem_elliptic_1d(const Fem1dMesh& mesh, double nu, const ScalarField& u,
                            const ScalarField& f);

// Newton solve of the Galerkin system of -nu y'' + y y' = rhs, y(lo)=y(hi)=0,
// from y=0, damped step halving on residual increase. `newton_iters_out`
// reports the iteration count when non-null.
ScalarField fem_burgers_1d(const Fem1dMesh& mesh, double nu, const ScalarField& rhs,
                           int* newton_iters_out = nullptr);

// Gradient of F(u) = 1/2||y(u)-yd||^2 - (lambda,u-z) + beta/2||u-z||^2 with
// y(u) the elliptic solve above, via one adjoint solve (discrete L2 inner
// products with trapezoidal weights).
std::vector<double> elliptic_reduced_grad(const Fem1dMesh& mesh, double nu, const ScalarField& u,
                                          const ScalarField& f, const ScalarField& ydelta,
                                          const ScalarField& z, const ScalarField& lambda,
                                          double beta);

double elliptic_reduced_objective(const Fem1dMesh& mesh, double nu, const ScalarField& u,
                                  const ScalarField& f, const ScalarField& ydelta,
                                  const ScalarField& z, const ScalarField& lambda, double beta);

struct GaussNewtonResult {
    ScalarField u;
    bool line_search_failed = false;
    int iterations = 0;
};

// Gauss-Newton with Armijo backtracking (factor 1/2, c=1e-4, 30 halvings)
// on the reduced functional above, for the potential-identification inner
// subproblem.
GaussNewtonResult gauss_newton_potential(const Fem1dMesh& mesh, double nu, const ScalarField& f,
                                         const ScalarField& ydelta, const ScalarField& z,
                                         const ScalarField& lambda, double beta, int iterations,
                                         ScalarField u0);

// Gradient of J(u) = 1/2||y(u)-yd||^2 + alpha/2||u||^2 subject to the
// Burgers state equation, via the transposed Newton Jacobian.
std::vector<double> burgers_reduced_grad(const Fem1dMesh& mesh, double nu, double alpha,
                                         const ScalarField& u, const ScalarField& yd,
                                         ScalarField* y_out = nullptr);

double burgers_reduced_objective(const Fem1dMesh& mesh, double nu, double alpha,
                                 const ScalarField& u, const ScalarField& yd);

struct ProjGradResult {
    ScalarField u;
    ScalarField y;
    int iterations = 0;
    bool converged = false;
};

// Projected gradient for min J(u) s.t. u <= ub pointwise: Riesz gradient
// steps with Armijo backtracking, stationarity tolerance on the projected
// step.
ProjGradResult projected_gradient_burgers(const Fem1dMesh& mesh, double nu, double alpha,
                                          const ScalarField& yd, double ub, int max_iters,
                                          double tol = 1e-8);

}  // namespace pdeopt
