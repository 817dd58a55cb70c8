#include <cmath>

#include "doctest.h"
#include "pdeopt/admm.hpp"

using namespace pdeopt;

TEST_CASE("multiplier_update formula and inverse round trip") {
    const Lattice lat = Lattice::line(0, 1, 5);
    ScalarField lam(lat, 0.0), u(lat, 0.7), z(lat, 0.7);
    const ScalarField same = multiplier_update(lam, u, z, 0.1);
    for (double v : same.values()) CHECK(v == 0.0);

    ScalarField lam1(lat, 1.0), u1(lat, 2.5), z1(lat, 0.5);
    const ScalarField upd = multiplier_update(lam1, u1, z1, 0.1);
    for (double v : upd.values()) CHECK(v == doctest::Approx(0.8).epsilon(1e-15));

    Rng rng(3);
    ScalarField rl(lat), ru(lat), rz(lat);
    for (std::size_t k = 0; k < lat.size(); ++k) {
        rl[k] = rng.normal();
        ru[k] = rng.normal();
        rz[k] = rng.normal();
    }
    const double beta = 0.37;
    ScalarField fwd = multiplier_update(rl, ru, rz, beta);
    // algebraic inverse: lambda = fwd + beta (u - z)
    for (std::size_t k = 0; k < lat.size(); ++k) {
        const double back = fwd[k] + beta * (ru[k] - rz[k]);
        CHECK(std::abs(back - rl[k]) <= 1e-14 * std::max(1.0, std::abs(rl[k])));
    }

    const Lattice other = Lattice::line(0, 1, 7);
    ScalarField mismatch(other, 0.0);
    CHECK_THROWS_AS(multiplier_update(rl, mismatch, rz, beta), ConfigError);
}

TEST_CASE("box prox output satisfies its bounds to 0 ulp") {
    ProblemSpec s = make_problem("ex2");
    Rng rng(5);
    ScalarField v(s.lattice);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = rng.uniform(-1, 1);
    const ScalarField z = apply_prox(s, v);
    for (std::size_t k = 0; k < z.size(); ++k) {
        CHECK(z[k] <= s.box_b);  // exact clamp, no tolerance
        CHECK(z[k] == std::min(v[k], s.box_b));
    }
}

TEST_CASE("sparse-box prox support matches the shrink support") {
    ProblemSpec s = make_problem("ex4");
    Rng rng(7);
    ScalarField v(s.lattice);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = rng.uniform(-20, 20);
    const ScalarField z = apply_prox(s, v);
    const double thr = s.rho / s.beta;
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (std::abs(v[k]) <= thr) {
            CHECK(z[k] == 0.0);
        } else {
            CHECK(z[k] != 0.0);
            CHECK(z[k] >= s.box_a);
            CHECK(z[k] <= s.box_b);
        }
    }
}

TEST_CASE("toy convex problem: identity prox collapses the primal residual") {
    // J(u) = 1/2||u - d||^2, u-step closed form, prox = identity, 3 nodes
    ProblemSpec s = make_problem("ex2", {{"lattice.nodes", 3.0}});
    s.prox = ProxKind::identity;
    s.outer_iters = 25;  // contraction rate beta/(1+beta) = 1/3 per iteration
    s.beta = 0.5;
    const Lattice lat = s.lattice;
    ScalarField d(lat);
    d[0] = 1.0;
    d[1] = -2.0;
    d[2] = 0.5;
    USolver closed_form = [&](int, const ScalarField& z, const ScalarField& lam) {
        ScalarField u(lat);
        for (std::size_t k = 0; k < lat.size(); ++k)
            u[k] = (d[k] + lam[k] + s.beta * z[k]) / (1.0 + s.beta);
        return std::make_pair(u, u);
    };
    AdmmConfig cfg;
    const ConvergenceReport rep = admm_run_custom(s, closed_form, cfg, 0);
    REQUIRE(rep.rows.size() == 25);
    // identity prox: z1 = u1 - lambda0/beta = u1, so lambda1 = 0 and residuals vanish
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].primal_residual <= rep.rows[i - 1].primal_residual + 1e-15);
        CHECK(rep.rows[i].primal_residual <= 1e-12);
    }
    // brute-force check of the fixed point: u = z = d at convergence
    for (std::size_t k = 0; k < lat.size(); ++k)
        CHECK(std::abs(rep.u[k] - d[k]) <= 1e-9);
}

TEST_CASE("custom solver: in-box control gives z = u and lambda = 0 after one step") {
    ProblemSpec s = make_problem("ex2");
    s.outer_iters = 1;
    USolver constant = [&](int, const ScalarField&, const ScalarField&) {
        ScalarField u(s.lattice, 0.1);  // strictly inside (-inf, 0.3]
        return std::make_pair(u, u);
    };
    const ConvergenceReport rep = admm_run_custom(s, constant, AdmmConfig{}, 0);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].primal_residual == 0.0);
    for (double v : rep.lambda.values()) CHECK(v == 0.0);
    for (std::size_t k = 0; k < rep.z.size(); ++k) CHECK(rep.z[k] == rep.u[k]);
}

TEST_CASE("failing inner solver truncates the report with a failure flag") {
    ProblemSpec s = make_problem("ex2");
    s.outer_iters = 5;
    USolver failing = [&](int k, const ScalarField&, const ScalarField&) {
        if (k == 2) throw NumericalError("synthetic divergence");
        ScalarField u(s.lattice, 0.1);
        return std::make_pair(u, u);
    };
    const ConvergenceReport rep = admm_run_custom(s, failing, AdmmConfig{}, 0);
    CHECK(rep.failed);
    CHECK(rep.rows.size() == 2);
    CHECK(rep.failure.find("synthetic divergence") != std::string::npos);
}

TEST_CASE("pinn admm runs are deterministic given the seed") {
    Overrides tiny{{"lattice.nodes", 21.0},
                   {"train.adam_iters", 5.0},
                   {"train.lbfgs_iters", 3.0},
                   {"admm.outer_iters", 2.0}};
    ProblemSpec s = make_problem("ex2", tiny);
    AdmmConfig cfg;
    cfg.exec = Exec::parallel;
    const ConvergenceReport a = admm_run(s, cfg, 42);
    const ConvergenceReport b = admm_run(s, cfg, 42);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].primal_residual == b.rows[i].primal_residual);
        CHECK(a.rows[i].objective == b.rows[i].objective);
    }
    for (std::size_t k = 0; k < a.u.size(); ++k) CHECK(a.u[k] == b.u[k]);
    // serial and parallel execution agree bitwise
    AdmmConfig cs = cfg;
    cs.exec = Exec::serial;
    const ConvergenceReport c = admm_run(s, cs, 42);
    for (std::size_t k = 0; k < a.u.size(); ++k) CHECK(a.u[k] == c.u[k]);
}

TEST_CASE("gauss-newton reference requires the potential preset") {
    ProblemSpec s = make_problem("ex2");
    AdmmConfig cfg;
    cfg.method = Method::reference;
    CHECK_THROWS_AS(admm_run(s, cfg, 0), ConfigError);
}
