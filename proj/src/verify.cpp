#include "pdeopt/verify.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <vector>

#include "pdeopt/admm.hpp"
#include "pdeopt/nnet.hpp"
#include "pdeopt/optim.hpp"
#include "pdeopt/prox.hpp"
#include "pdeopt/refsolve.hpp"
#include "pdeopt/runio.hpp"

namespace pdeopt {

namespace {

struct Check {
    const char* name;
    std::function<bool()> fn;
};

// --- jets -------------------------------------------------------------

Mlp random_net(std::vector<int> widths, std::uint64_t seed) {
    Rng rng(seed);
    return Mlp::init(std::move(widths), rng);
}

bool jet_fd_match(const Mlp& net, const AnsatzSpec& an, int dim, Rng& rng, bool flip_diag2) {
    const double h = 1e-4;
    for (int trial = 0; trial < 50; ++trial) {
        Point x{0, 0, 0};
        for (int a = 0; a < dim; ++a) x[a] = rng.uniform(0.05, 0.95);
        JetValue j = eval_jet(net, an, x, dim);
        if (flip_diag2)
            for (int a = 0; a < dim; ++a) j.diag2[a] = -j.diag2[a];
        double scale = std::abs(j.value);
        for (int a = 0; a < dim; ++a)
            scale = std::max({scale, std::abs(j.grad[a]), std::abs(j.diag2[a])});
        scale = std::max(scale, 1e-3);
        for (int a = 0; a < dim; ++a) {
            Point xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            const double fp = eval_jet(net, an, xp, dim).value;
            const double fm = eval_jet(net, an, xm, dim).value;
            const double f0 = j.value;
            const double g_fd = (fp - fm) / (2 * h);
            const double d2_fd = (fp - 2 * f0 + fm) / (h * h);
            if (std::abs(g_fd - j.grad[a]) > 1e-5 * scale) return false;
            if (std::abs(d2_fd - j.diag2[a]) > 1e-5 * std::max(scale, std::abs(d2_fd)))
                return false;
        }
    }
    return true;
}

bool check_jets_fd() {
    Rng rng(101);
    Mlp n1 = random_net({1, 20, 20, 1}, 7);
    Mlp n2 = random_net({2, 16, 16, 1}, 8);
    Mlp n3 = random_net({3, 12, 12, 1}, 9);
    AnsatzSpec one;
    AnsatzSpec hold{AnsatzSpec::Mult::hold01_axis0, 1.0};
    return jet_fd_match(n1, one, 1, rng, false) && jet_fd_match(n1, hold, 1, rng, false) &&
           jet_fd_match(n2, one, 2, rng, false) && jet_fd_match(n3, one, 3, rng, false);
}

bool check_jets_mutation_detected() {
    Rng rng(202);
    Mlp n = random_net({1, 20, 20, 1}, 11);
    AnsatzSpec one;
    // a sign flip in the second derivative must be caught by the FD oracle
    return !jet_fd_match(n, one, 1, rng, true);
}

bool check_param_grad_fd() {
    // loss = sum over two points of (diag2 of yhat)^2 + value^2 + grad^2 mix
    Mlp net = random_net({1, 12, 12, 1}, 13);
    AnsatzSpec one;
    CompositeLoss loss;
    loss.nets.push_back({&net, one, "n"});
    LossGroup g;
    g.label = "t";
    g.pts = PointBatch(2, 1);
    g.pts.at(0, 0) = 0.3;
    g.pts.at(0, 1) = 0.7;
    g.used = {true};
    g.depth = {JetDepth::second};
    LossBlock b;
    b.weight = 1.0;
    b.term = [](int, std::span<const JetValue> J, std::span<JetValue> S) {
        S[0].diag2[0] = 2.0 * J[0].diag2[0];
        return J[0].diag2[0] * J[0].diag2[0];
    };
    g.blocks.push_back(std::move(b));
    loss.groups.push_back(std::move(g));
    loss.exec = Exec::serial;

    const std::size_t P = loss.param_count();
    std::vector<double> theta(P), grad(P), gp(P);
    loss.get_params(theta);
    loss.value_and_grad(theta, grad);
    double gmax = 1e-12;
    for (double v : grad) gmax = std::max(gmax, std::abs(v));
    Rng rng(4242);
    const double h = 1e-5;
    for (int t = 0; t < 20; ++t) {
        const std::size_t i = rng.below(P);
        auto tp = theta;
        tp[i] += h;
        const double fp = loss.value_and_grad(tp, gp);
        tp[i] -= 2 * h;
        const double fm = loss.value_and_grad(tp, gp);
        const double fd = (fp - fm) / (2 * h);
        if (std::abs(fd - grad[i]) > 1e-4 * gmax) return false;
    }
    return true;
}

bool check_batch_matches_scalar() {
    Rng rng(31);
    for (int dim = 1; dim <= 3; ++dim) {
        Mlp net = random_net({dim, 10, 10, 1}, 100 + dim);
        AnsatzSpec an = dim == 1 ? AnsatzSpec{AnsatzSpec::Mult::hold01_axis0, 2.0} : AnsatzSpec{};
        JetEvaluator ev(net, an, dim, JetDepth::second);
        PointBatch pts(150, dim);
        for (int i = 0; i < pts.n; ++i)
            for (int a = 0; a < dim; ++a) pts.at(a, i) = rng.uniform();
        JetBatch out;
        ev.forward(pts, out, Exec::parallel);
        for (int i = 0; i < pts.n; ++i) {
            const JetValue ref = eval_jet(net, an, pts.point(i), dim);
            const JetValue got = out.get(i);
            double scale = std::max(1e-9, std::abs(ref.value));
            if (std::abs(got.value - ref.value) > 1e-12 * scale) return false;
            for (int a = 0; a < dim; ++a) {
                if (std::abs(got.grad[a] - ref.grad[a]) >
                    1e-11 * std::max(1.0, std::abs(ref.grad[a])))
                    return false;
                if (std::abs(got.diag2[a] - ref.diag2[a]) >
                    1e-10 * std::max(1.0, std::abs(ref.diag2[a])))
                    return false;
            }
        }
    }
    return true;
}

// --- prox -------------------------------------------------------------

double brute_prox_1d(double v, double zeta, double a, double b, int grid) {
    // argmin over the box of zeta|z| + 1/2 (z-v)^2
    const double lo = a, hi = b;
    double best = lo, bestF = 1e300;
    for (int i = 0; i <= grid; ++i) {
        const double z = lo + (hi - lo) * i / grid;
        const double F = zeta * std::abs(z) + 0.5 * (z - v) * (z - v);
        if (F < bestF) {
            bestF = F;
            best = z;
        }
    }
    return best;
}

bool check_prox_bruteforce() {
    Rng rng(55);
    const Lattice lat = Lattice::line(0, 1, 2);
    for (int t = 0; t < 1000; ++t) {
        const double v = rng.uniform(-10, 10);
        const double zeta = rng.uniform(0, 5);
        const double a = rng.uniform(-6, -0.01);
        const double b = rng.uniform(0.01, 6);
        ScalarField f(lat, v);
        const double got = prox_sparse_box(f, zeta, a, b)[0];
        const int grid = 100000;
        const double want = brute_prox_1d(v, zeta, a, b, grid);
        if (std::abs(got - want) > std::max((b - a) / grid, 1e-9)) return false;
    }
    return true;
}

bool check_prox_nonexpansive() {
    Rng rng(66);
    const Lattice lat = Lattice::line(0, 1, 33);
    for (int t = 0; t < 50; ++t) {
        ScalarField v1(lat), v2(lat);
        for (std::size_t k = 0; k < lat.size(); ++k) {
            v1[k] = rng.uniform(-5, 5);
            v2[k] = rng.uniform(-5, 5);
        }
        const double zeta = rng.uniform(0, 2);
        const double a = -rng.uniform(0.1, 3), b = rng.uniform(0.1, 3);
        const double d0 = l2_norm_diff(v1, v2);
        if (l2_norm_diff(shrink(v1, zeta), shrink(v2, zeta)) > d0 * (1 + 1e-12)) return false;
        if (l2_norm_diff(project_box(v1, a, b), project_box(v2, a, b)) > d0 * (1 + 1e-12))
            return false;
    }
    return true;
}

bool check_tv_constant_and_zero_gamma() {
    const Lattice lat = Lattice::line(0, 1, 32);
    ScalarField c(lat, 3.25);
    TvConfig cfg{5.0, 200};
    const ScalarField out = prox_tv(c, 0.3, cfg);
    for (std::size_t k = 0; k < lat.size(); ++k)
        if (std::abs(out[k] - 3.25) > 1e-9) return false;
    // gamma = 0: prox of the zero functional returns v (small zeta converges fast)
    Rng rng(77);
    ScalarField v(lat);
    for (std::size_t k = 0; k < lat.size(); ++k) v[k] = rng.uniform(-1, 1);
    TvConfig cfg0{1e-3, 300};
    const ScalarField out0 = prox_tv(v, 0.0, cfg0);
    for (std::size_t k = 0; k < lat.size(); ++k)
        if (std::abs(out0[k] - v[k]) > 1e-8) return false;
    return true;
}

bool check_tv_decreases_tv() {
    Rng rng(88);
    const Lattice lat = Lattice::line(0, 1, 48);
    TvConfig cfg{5.0, 400};
    for (int t = 0; t < 20; ++t) {
        ScalarField v(lat);
        // random piecewise-constant input
        double level = rng.uniform(-2, 2);
        for (std::size_t k = 0; k < lat.size(); ++k) {
            if (rng.uniform() < 0.1) level = rng.uniform(-2, 2);
            v[k] = level;
        }
        const ScalarField z = prox_tv(v, rng.uniform(0.01, 0.5), cfg);
        if (discrete_tv(z) > discrete_tv(v) + 1e-9) return false;
    }
    return true;
}

// --- optim ------------------------------------------------------------

bool check_lbfgs_quadratic() {
    // strictly convex quadratic in 10 dims
    Rng rng(111);
    const int n = 10;
    std::vector<double> d(n), x0(n), xstar(n);
    for (int i = 0; i < n; ++i) {
        d[i] = rng.uniform(0.5, 5.0);
        x0[i] = rng.uniform(-2, 2);
        xstar[i] = rng.uniform(-1, 1);
    }
    GradOracle f = [&](std::span<const double> x, std::span<double> g) {
        double F = 0;
        for (int i = 0; i < n; ++i) {
            g[i] = d[i] * (x[i] - xstar[i]);
            F += 0.5 * d[i] * (x[i] - xstar[i]) * (x[i] - xstar[i]);
        }
        return F;
    };
    OptConfig cfg;
    cfg.lbfgs_iters = 15;
    cfg.grad_tol = 1e-10;
    OptResult r = lbfgs_run(f, x0, cfg);
    return r.grad_norm <= 1e-10 && r.iterations <= 15 && r.wolfe_violations == 0;
}

bool check_lbfgs_rosenbrock() {
    GradOracle f = [](std::span<const double> x, std::span<double> g) {
        const double a = 1.0, b = 100.0;
        const double t1 = a - x[0], t2 = x[1] - x[0] * x[0];
        g[0] = -2 * t1 - 4 * b * x[0] * t2;
        g[1] = 2 * b * t2;
        return t1 * t1 + b * t2 * t2;
    };
    OptConfig cfg;
    cfg.lbfgs_iters = 200;
    cfg.grad_tol = 1e-12;
    OptResult r = lbfgs_run(f, {-1.2, 1.0}, cfg);
    return std::abs(r.theta[0] - 1.0) <= 1e-6 && std::abs(r.theta[1] - 1.0) <= 1e-6 &&
           r.iterations <= 200 && r.wolfe_violations == 0;
}

bool check_adam_quadratic() {
    Rng rng(222);
    const int n = 8;
    std::vector<double> x0(n), xstar(n);
    for (int i = 0; i < n; ++i) {
        x0[i] = rng.uniform(-1, 1);
        xstar[i] = rng.uniform(-1, 1);
    }
    GradOracle f = [&](std::span<const double> x, std::span<double> g) {
        double F = 0;
        for (int i = 0; i < n; ++i) {
            g[i] = x[i] - xstar[i];
            F += 0.5 * (x[i] - xstar[i]) * (x[i] - xstar[i]);
        }
        return F;
    };
    OptConfig cfg;
    cfg.adam_iters = 5000;
    cfg.adam_lr = 1e-2;
    OptResult r = adam_run(f, x0, cfg);
    double err = 0;
    for (int i = 0; i < n; ++i) err += (r.theta[i] - xstar[i]) * (r.theta[i] - xstar[i]);
    return std::sqrt(err) <= 1e-3;
}

// --- fem --------------------------------------------------------------

double elliptic_manufactured_error(int elements) {
    using std::numbers::pi;
    Fem1dMesh mesh{0, 1, elements};
    const Lattice lat = mesh.lattice();
    const ScalarField u(lat, 1.0);
    const double nu = 5e-3;
    const ScalarField f = ScalarField::sample(lat, [nu](const Point& x) {
        return nu * pi * pi * std::sin(pi * x[0]) + std::sin(pi * x[0]);
    });
    const ScalarField y = fem_elliptic_1d(mesh, nu, u, f);
    const ScalarField ystar =
        ScalarField::sample(lat, [](const Point& x) { return std::sin(pi * x[0]); });
    return l2_norm_diff(y, ystar);
}

double burgers_manufactured_error(int elements) {
    using std::numbers::pi;
    Fem1dMesh mesh{0, 1, elements};
    const Lattice lat = mesh.lattice();
    const double nu = 1.0 / 12.0;
    // y* = sin(pi x): rhs = -nu y*'' + y* y*'
    const ScalarField rhs = ScalarField::sample(lat, [nu](const Point& q) {
        const double s = std::sin(pi * q[0]), c = std::cos(pi * q[0]);
        return nu * pi * pi * s + s * pi * c;
    });
    const ScalarField y = fem_burgers_1d(mesh, nu, rhs);
    const ScalarField ystar =
        ScalarField::sample(lat, [](const Point& q) { return std::sin(pi * q[0]); });
    return l2_norm_diff(y, ystar);
}

bool check_fem_convergence() {
    const double r1 = elliptic_manufactured_error(50) / elliptic_manufactured_error(100);
    const double r2 = elliptic_manufactured_error(100) / elliptic_manufactured_error(200);
    const double b1 = burgers_manufactured_error(50) / burgers_manufactured_error(100);
    const double b2 = burgers_manufactured_error(100) / burgers_manufactured_error(200);
    auto near4 = [](double r) { return r > 3.6 && r < 4.4; };
    return near4(r1) && near4(r2) && near4(b1) && near4(b2);
}

bool check_fem_adjoint_grads() {
    Rng rng(333);
    Fem1dMesh mesh{0, 1, 60};
    const Lattice lat = mesh.lattice();
    // elliptic reduced gradient vs finite differences
    {
        const double nu = 5e-3, beta = 0.1;
        const ScalarField f =
            ScalarField::sample(lat, [](const Point& x) { return std::sin(2 * std::numbers::pi * x[0]); });
        ScalarField u(lat, 0.5), z(lat), lam(lat), yd(lat);
        for (std::size_t k = 0; k < lat.size(); ++k) {
            u[k] = rng.uniform(0.2, 1.0);
            z[k] = rng.uniform(-0.5, 0.5);
            lam[k] = rng.uniform(-0.5, 0.5);
        }
        yd = fem_elliptic_1d(mesh, nu, u, f);
        for (std::size_t k = 0; k < lat.size(); ++k) yd[k] += 0.05 * rng.normal();
        const auto g = elliptic_reduced_grad(mesh, nu, u, f, yd, z, lam, beta);
        double gmax = 1e-12;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        const double h = 1e-6;
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng.below(lat.size());
            ScalarField up = u;
            up[i] += h;
            ScalarField um = u;
            um[i] -= h;
            const double fd = (elliptic_reduced_objective(mesh, nu, up, f, yd, z, lam, beta) -
                               elliptic_reduced_objective(mesh, nu, um, f, yd, z, lam, beta)) /
                              (2 * h);
            if (std::abs(fd - g[i]) > 1e-6 * gmax) return false;
        }
    }
    // Burgers reduced gradient vs finite differences
    {
        const double nu = 1.0 / 12.0, alpha = 0.1;
        ScalarField u(lat), yd(lat, 0.3);
        for (std::size_t k = 0; k < lat.size(); ++k) u[k] = rng.uniform(-0.2, 0.3);
        const auto g = burgers_reduced_grad(mesh, nu, alpha, u, yd);
        double gmax = 1e-12;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        const double h = 1e-6;
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng.below(lat.size());
            ScalarField up = u;
            up[i] += h;
            ScalarField um = u;
            um[i] -= h;
            const double fd = (burgers_reduced_objective(mesh, nu, alpha, up, yd) -
                               burgers_reduced_objective(mesh, nu, alpha, um, yd)) /
                              (2 * h);
            if (std::abs(fd - g[i]) > 1e-6 * gmax) return false;
        }
    }
    return true;
}

const std::vector<Check>& suite_checks(const std::string& name) {
    static const std::vector<Check> jets{
        {"jet derivatives match finite differences", check_jets_fd},
        {"diag2 sign mutation is detected", check_jets_mutation_detected},
        {"parameter gradients through diag2 losses match finite differences", check_param_grad_fd},
        {"batched kernel matches scalar reference", check_batch_matches_scalar},
    };
    static const std::vector<Check> prox{
        {"scalar prox matches brute-force argmin (1e3 cases)", check_prox_bruteforce},
        {"shrink and project_box are nonexpansive", check_prox_nonexpansive},
        {"tv prox: constant fixed point and gamma=0 identity", check_tv_constant_and_zero_gamma},
        {"tv prox does not increase discrete TV", check_tv_decreases_tv},
    };
    static const std::vector<Check> optim{
        {"lbfgs solves a quadratic to 1e-10 within 15 iterations", check_lbfgs_quadratic},
        {"lbfgs reaches the Rosenbrock minimum within 200 iterations", check_lbfgs_rosenbrock},
        {"adam solves a quadratic to 1e-3 in 5000 steps", check_adam_quadratic},
    };
    static const std::vector<Check> fem{
        {"fem solvers converge at second order (ratio 4.0 +/- 10%)", check_fem_convergence},
        {"adjoint gradients match finite differences to 1e-6", check_fem_adjoint_grads},
    };
    static const std::vector<Check> none{};
    if (name == "jets") return jets;
    if (name == "prox") return prox;
    if (name == "optim") return optim;
    if (name == "fem") return fem;
    return none;
}

}  // namespace

SuiteResult run_suite(const std::string& name, bool verbose) {
    SuiteResult total;
    const std::vector<std::string> names =
        name == "all" ? std::vector<std::string>{"jets", "prox", "optim", "fem"}
                      : std::vector<std::string>{name};
    for (const auto& n : names) {
        const auto& checks = suite_checks(n);
        if (checks.empty()) throw ConfigError("unknown verify suite '" + n + "'");
        for (const auto& c : checks) {
            bool ok = false;
            try {
                ok = c.fn();
            } catch (const std::exception& e) {
                if (verbose) std::printf("  exception: %s\n", e.what());
                ok = false;
            }
            if (verbose) std::printf("[%s] %-4s %s\n", ok ? "ok" : "FAIL", n.c_str(), c.name);
            ok ? ++total.passed : ++total.failed;
        }
    }
    if (verbose)
        std::printf("verify: %d passed, %d failed\n", total.passed, total.failed);
    return total;
}

}  // namespace pdeopt
