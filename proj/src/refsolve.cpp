#include "pdeopt/refsolve.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace pdeopt {

namespace {

// Thomas solve of a tridiagonal system (sub, diag, super), overwriting rhs.
void tridiag_solve(std::vector<double> sub, std::vector<double> diag, std::vector<double> sup,
                   std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (diag[i - 1] == 0.0) throw NumericalError("tridiagonal solve: singular system");
        const double m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    if (diag[n - 1] == 0.0) throw NumericalError("tridiagonal solve: singular system");
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

struct Tridiag {
    std::vector<double> sub, diag, sup;  // interior unknowns only
};

// Stiffness + lumped mass rows for -nu y'' + u y on interior nodes.
Tridiag elliptic_matrix(const Fem1dMesh& mesh, double nu, const ScalarField& u) {
    const int m = mesh.nodes() - 2;
    const double h = mesh.h();
    Tridiag A{std::vector<double>(m, -nu / h), std::vector<double>(m, 0.0),
              std::vector<double>(m, -nu / h)};
    for (int i = 0; i < m; ++i) A.diag[i] = 2.0 * nu / h + h * u[i + 1];
    return A;
}

}  // namespace

ScalarField fem_elliptic_1d(const Fem1dMesh& mesh, double nu, const ScalarField& u,
                            const ScalarField& f) {
    mesh.validate();
    if (!(nu > 0)) throw ConfigError("fem_elliptic_1d: nu must be > 0");
    const int n = mesh.nodes();
    if (static_cast<int>(u.size()) != n || static_cast<int>(f.size()) != n)
        throw ConfigError("fem_elliptic_1d: field size mismatch");
    Tridiag A = elliptic_matrix(mesh, nu, u);
    std::vector<double> rhs(n - 2);
    for (int i = 0; i < n - 2; ++i) rhs[i] = mesh.h() * f[i + 1];
    tridiag_solve(A.sub, A.diag, A.sup, rhs);
    ScalarField y(mesh.lattice(), 0.0);
    for (int i = 0; i < n - 2; ++i) y[i + 1] = rhs[i];
    y.check_finite("fem_elliptic_1d solution");
    return y;
}

namespace {

// Residual and Jacobian of the Galerkin Burgers system on interior nodes:
// R_i = nu/h (-y_{i-1} + 2 y_i - y_{i+1}) + y_i (y_{i+1} - y_{i-1})/2 - h rhs_i.
void burgers_residual(const Fem1dMesh& mesh, double nu, const std::vector<double>& y,
                      const ScalarField& rhs, std::vector<double>& R) {
    const int n = mesh.nodes();
    const double h = mesh.h();
    R.assign(n - 2, 0.0);
    for (int i = 1; i <= n - 2; ++i) {
        R[i - 1] = nu / h * (-y[i - 1] + 2.0 * y[i] - y[i + 1]) +
                   y[i] * (y[i + 1] - y[i - 1]) / 2.0 - h * rhs[i];
    }
}

Tridiag burgers_jacobian(const Fem1dMesh& mesh, double nu, const std::vector<double>& y) {
    const int m = mesh.nodes() - 2;
    const double h = mesh.h();
    Tridiag J{std::vector<double>(m), std::vector<double>(m), std::vector<double>(m)};
    for (int i = 1; i <= m; ++i) {
        J.sub[i - 1] = -nu / h - y[i] / 2.0;
        J.diag[i - 1] = 2.0 * nu / h + (y[i + 1] - y[i - 1]) / 2.0;
        J.sup[i - 1] = -nu / h + y[i] / 2.0;
    }
    return J;
}

double norm_inf(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

ScalarField fem_burgers_1d(const Fem1dMesh& mesh, double nu, const ScalarField& rhs,
                           int* newton_iters_out) {
    mesh.validate();
    if (!(nu > 0)) throw ConfigError("fem_burgers_1d: nu must be > 0");
    const int n = mesh.nodes();
    if (static_cast<int>(rhs.size()) != n) throw ConfigError("fem_burgers_1d: field size mismatch");
    std::vector<double> y(n, 0.0), R, step;
    burgers_residual(mesh, nu, y, rhs, R);
    double rnorm = norm_inf(R);
    int it = 0;
    for (; it < 50 && rnorm > 1e-12; ++it) {
        Tridiag J = burgers_jacobian(mesh, nu, y);
        step = R;
        tridiag_solve(J.sub, J.diag, J.sup, step);
        double t = 1.0;
        std::vector<double> y_new(n, 0.0), R_new;
        double rnorm_new = rnorm;
        bool accepted = false;
        for (int half = 0; half < 20; ++half) {
            for (int i = 1; i <= n - 2; ++i) y_new[i] = y[i] - t * step[i - 1];
            burgers_residual(mesh, nu, y_new, rhs, R_new);
            rnorm_new = norm_inf(R_new);
            if (rnorm_new < rnorm) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted)
            throw NumericalError("fem_burgers_1d: Newton stagnation, residual " +
                                 std::to_string(rnorm));
        y = y_new;
        R = R_new;
        rnorm = rnorm_new;
    }
    if (rnorm > 1e-10)
        throw NumericalError("fem_burgers_1d: Newton did not converge, residual " +
                             std::to_string(rnorm));
    if (newton_iters_out) *newton_iters_out = it;
    ScalarField out(mesh.lattice(), std::move(y));
    out.check_finite("fem_burgers_1d solution");
    return out;
}

double elliptic_reduced_objective(const Fem1dMesh& mesh, double nu, const ScalarField& u,
                                  const ScalarField& f, const ScalarField& ydelta,
                                  const ScalarField& z, const ScalarField& lambda, double beta) {
    const ScalarField y = fem_elliptic_1d(mesh, nu, u, f);
    const Lattice lat = mesh.lattice();
    double F = 0.0;
    for (std::size_t k = 0; k < lat.size(); ++k) {
        const double w = lat.quad_weight(k);
        const double r = y[k] - ydelta[k];
        const double du = u[k] - z[k];
        F += w * (0.5 * r * r - lambda[k] * du + 0.5 * beta * du * du);
    }
    return F;
}

std::vector<double> elliptic_reduced_grad(const Fem1dMesh& mesh, double nu, const ScalarField& u,
                                          const ScalarField& f, const ScalarField& ydelta,
                                          const ScalarField& z, const ScalarField& lambda,
                                          double beta) {
    const int n = mesh.nodes();
    const Lattice lat = mesh.lattice();
    const ScalarField y = fem_elliptic_1d(mesh, nu, u, f);
    // adjoint solve A p = W (y - ydelta); A is symmetric
    Tridiag A = elliptic_matrix(mesh, nu, u);
    std::vector<double> rhs(n - 2);
    for (int i = 1; i <= n - 2; ++i) rhs[i - 1] = lat.quad_weight(i) * (y[i] - ydelta[i]);
    tridiag_solve(A.sub, A.diag, A.sup, rhs);
    std::vector<double> grad(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double w = lat.quad_weight(i);
        grad[i] = beta * w * (u[i] - z[i]) - w * lambda[i];
        if (i >= 1 && i <= n - 2) grad[i] -= mesh.h() * y[i] * rhs[i - 1];
    }
    return grad;
}

namespace {

// Dense SPD Cholesky solve (desk-scale systems).
void chol_solve(std::vector<double>& A, std::vector<double>& b, int n) {
    for (int j = 0; j < n; ++j) {
        double d = A[std::size_t(j) * n + j];
        for (int k = 0; k < j; ++k) d -= A[std::size_t(j) * n + k] * A[std::size_t(j) * n + k];
        if (d <= 0.0) throw NumericalError("gauss-newton system not positive definite");
        const double L = std::sqrt(d);
        A[std::size_t(j) * n + j] = L;
        for (int i = j + 1; i < n; ++i) {
            double s = A[std::size_t(i) * n + j];
            for (int k = 0; k < j; ++k) s -= A[std::size_t(i) * n + k] * A[std::size_t(j) * n + k];
            A[std::size_t(i) * n + j] = s / L;
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= A[std::size_t(i) * n + k] * b[k];
        b[i] = s / A[std::size_t(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= A[std::size_t(k) * n + i] * b[k];
        b[i] = s / A[std::size_t(i) * n + i];
    }
}

}  // namespace

GaussNewtonResult gauss_newton_potential(const Fem1dMesh& mesh, double nu, const ScalarField& f,
                                         const ScalarField& ydelta, const ScalarField& z,
                                         const ScalarField& lambda, double beta, int iterations,
                                         ScalarField u0) {
    const int n = mesh.nodes();
    const Lattice lat = mesh.lattice();
    GaussNewtonResult res{std::move(u0)};
    double F = elliptic_reduced_objective(mesh, nu, res.u, f, ydelta, z, lambda, beta);
    for (int it = 0; it < iterations; ++it) {
        const ScalarField y = fem_elliptic_1d(mesh, nu, res.u, f);
        // sensitivity columns S_j = -A^{-1} (h y_j e_j), interior j
        Tridiag A0 = elliptic_matrix(mesh, nu, res.u);
        std::vector<std::vector<double>> S(n);  // interior representation, size n-2
        for (int j = 1; j <= n - 2; ++j) {
            std::vector<double> rhs(n - 2, 0.0);
            rhs[j - 1] = -mesh.h() * y[j];
            auto sub = A0.sub, diag = A0.diag, sup = A0.sup;
            tridiag_solve(sub, diag, sup, rhs);
            S[j] = std::move(rhs);
        }
        // H = S^T W S + beta W ; g = S^T W (y - ydelta) + beta W (u - z) - W lambda
        std::vector<double> H(std::size_t(n) * n, 0.0), g(n, 0.0);
        for (int j = 0; j < n; ++j) {
            const double wj = lat.quad_weight(j);
            H[std::size_t(j) * n + j] = beta * wj;
            g[j] = beta * wj * (res.u[j] - z[j]) - wj * lambda[j];
        }
        for (int j = 1; j <= n - 2; ++j) {
            for (int k = j; k <= n - 2; ++k) {
                double s = 0.0;
                for (int i = 1; i <= n - 2; ++i)
                    s += lat.quad_weight(i) * S[j][i - 1] * S[k][i - 1];
                H[std::size_t(j) * n + k] += s;
                if (k != j) H[std::size_t(k) * n + j] += s;
            }
            double gs = 0.0;
            for (int i = 1; i <= n - 2; ++i)
                gs += lat.quad_weight(i) * S[j][i - 1] * (y[i] - ydelta[i]);
            g[j] += gs;
        }
        std::vector<double> step = g;
        for (double& s : step) s = -s;
        chol_solve(H, step, n);
        // Armijo backtracking, factor 1/2, c = 1e-4
        double gTd = 0.0;
        for (int j = 0; j < n; ++j) gTd += g[j] * step[j];
        double t = 1.0;
        bool accepted = false;
        ScalarField u_try = res.u;
        for (int half = 0; half <= 30; ++half) {
            for (int j = 0; j < n; ++j) u_try[j] = res.u[j] + t * step[j];
            const double Ft = elliptic_reduced_objective(mesh, nu, u_try, f, ydelta, z, lambda, beta);
            if (Ft <= F + 1e-4 * t * gTd) {
                accepted = true;
                F = Ft;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            res.line_search_failed = true;
            return res;
        }
        res.u = u_try;
        res.iterations = it + 1;
    }
    return res;
}

double burgers_reduced_objective(const Fem1dMesh& mesh, double nu, double alpha,
                                 const ScalarField& u, const ScalarField& yd) {
    const ScalarField y = fem_burgers_1d(mesh, nu, u);
    const Lattice lat = mesh.lattice();
    double J = 0.0;
    for (std::size_t k = 0; k < lat.size(); ++k) {
        const double w = lat.quad_weight(k);
        const double r = y[k] - yd[k];
        J += w * (0.5 * r * r + 0.5 * alpha * u[k] * u[k]);
    }
    return J;
}

std::vector<double> burgers_reduced_grad(const Fem1dMesh& mesh, double nu, double alpha,
                                         const ScalarField& u, const ScalarField& yd,
                                         ScalarField* y_out) {
    const int n = mesh.nodes();
    const Lattice lat = mesh.lattice();
    const ScalarField y = fem_burgers_1d(mesh, nu, u);
    if (y_out) *y_out = y;
    // adjoint: J(y)^T p = W (y - yd) on interior nodes
    std::vector<double> yv(y.values().begin(), y.values().end());
    Tridiag J = burgers_jacobian(mesh, nu, yv);
    std::vector<double> rhs(n - 2);
    for (int i = 1; i <= n - 2; ++i) rhs[i - 1] = lat.quad_weight(i) * (y[i] - yd[i]);
    // transpose: swap sub and super
    std::vector<double> tsub(n - 2), tsup(n - 2);
    for (int i = 0; i < n - 2; ++i) {
        tsub[i] = (i > 0) ? J.sup[i - 1] : 0.0;
        tsup[i] = (i + 1 < n - 2) ? J.sub[i + 1] : 0.0;
    }
    tridiag_solve(tsub, J.diag, tsup, rhs);
    std::vector<double> grad(n, 0.0);
    for (int i = 0; i < n; ++i) {
        grad[i] = alpha * lat.quad_weight(i) * u[i];
        if (i >= 1 && i <= n - 2) grad[i] += mesh.h() * rhs[i - 1];
    }
    return grad;
}

ProjGradResult projected_gradient_burgers(const Fem1dMesh& mesh, double nu, double alpha,
                                          const ScalarField& yd, double ub, int max_iters,
                                          double tol) {
    const int n = mesh.nodes();
    const Lattice lat = mesh.lattice();
    ProjGradResult res{ScalarField(lat, 0.0), ScalarField(lat, 0.0)};
    double J = burgers_reduced_objective(mesh, nu, alpha, res.u, yd);
    double t = 1.0;
    for (int it = 0; it < max_iters; ++it) {
        std::vector<double> g = burgers_reduced_grad(mesh, nu, alpha, res.u, yd, &res.y);
        // Riesz representative of the gradient in the weighted inner product
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) d[i] = g[i] / lat.quad_weight(i);
        // stationarity: || u - P(u - d) ||
        double stat = 0.0;
        for (int i = 0; i < n; ++i) {
            const double proj = std::min(res.u[i] - d[i], ub);
            const double diff = res.u[i] - proj;
            stat += lat.quad_weight(i) * diff * diff;
        }
        res.iterations = it;
        if (std::sqrt(stat) <= tol) {
            res.converged = true;
            return res;
        }
        // Armijo along the projection arc
        t = std::min(2.0 * t, 1.0);
        bool accepted = false;
        ScalarField u_try = res.u;
        for (int half = 0; half <= 30; ++half) {
            double decr = 0.0;
            for (int i = 0; i < n; ++i) {
                u_try[i] = std::min(res.u[i] - t * d[i], ub);
                decr += g[i] * (u_try[i] - res.u[i]);
            }
            const double Jt = burgers_reduced_objective(mesh, nu, alpha, u_try, yd);
            if (Jt <= J + 1e-4 * decr) {
                accepted = true;
                J = Jt;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) return res;
        res.u = u_try;
    }
    return res;
}

}  // namespace pdeopt
