#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pdeopt/problems.hpp"
#include "pdeopt/prox.hpp"

using namespace pdeopt;
using std::numbers::pi;

TEST_CASE("make_problem rejects unknown ids and override keys") {
    CHECK_THROWS_AS(make_problem("ex9"), ConfigError);
    Overrides bad{{"admm.betaa", 0.2}};
    CHECK_THROWS_AS(make_problem("ex1", bad), ConfigError);
}

TEST_CASE("ex1 preset carries the published constants") {
    const ProblemSpec s = make_problem("ex1");
    CHECK(s.nu == 5e-3);
    CHECK(s.gamma == 8e-4);
    CHECK(s.noise_delta == 0.05);
    CHECK(s.beta == 0.1);
    CHECK(s.outer_iters == 20);
    CHECK(s.lattice.nodes(0) == 101);
    CHECK(s.train.opt.adam_iters == 20000);
    CHECK(s.train.opt.adam_lr == 1e-4);
    CHECK(s.train.opt.lbfgs_iters == 1000);
    CHECK(s.tv_zeta == 0.5);
    CHECK(s.tv_inner == 80);
    // u_true piecewise values
    auto at = [&](double x) { return interp(s.u_true, {x, 0, 0}); };
    CHECK(at(0.5) == 1.0);
    CHECK(at(0.1) == doctest::Approx(0.2));
    CHECK(at(0.25) == 1.0);
    // TV of the true potential: two jumps of 0.8
    CHECK(discrete_tv(s.u_true) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(s.data.size() == s.lattice.size());
}

TEST_CASE("ex2 preset: bounds and target") {
    const ProblemSpec s = make_problem("ex2");
    CHECK(s.nu == doctest::Approx(1.0 / 12.0));
    CHECK(s.alpha == 0.1);
    CHECK(s.box_b == 0.3);
    CHECK(std::isinf(s.box_a));
    CHECK(s.yd_fn({0.4, 0, 0}) == 0.3);
    CHECK(s.outer_iters == 20);
    CHECK(s.train.opt.adam_iters == 5000);
    CHECK(s.train.opt.adam_lr == 1e-3);
}

TEST_CASE("ex3 preset: sources, window, and discrete TV of truth") {
    const ProblemSpec s = make_problem("ex3");
    CHECK(s.c_coef == 1.0);
    CHECK(s.beta == 5e-2);
    CHECK(s.outer_iters == 350);
    CHECK(s.lattice.nodes(0) == 65);
    auto at = [&](double x, double y) { return interp(s.u_true, {x, y, 0}); };
    CHECK(at(0.3, 0.5) == 3.0);
    CHECK(at(0.6, 0.5) == -9.0);
    CHECK(at(0.1, 0.1) == 0.0);
    // interface-measure estimate: 18 within one cell of slack
    CHECK(std::abs(discrete_tv(s.u_true) - 18.0) <= 1.2);
    CHECK(s.in_omega({0.3, 0.5, 0}));
    CHECK(!s.in_omega({0.1, 0.1, 0}));
    // support mask zeroes the outside
    ScalarField ones(s.lattice, 1.0);
    const ScalarField masked = s.apply_support_mask(ones);
    CHECK(interp(masked, {0.1, 0.1, 0}) == 0.0);
    CHECK(interp(masked, {0.4, 0.4, 0}) == 1.0);
}

TEST_CASE("ex4 preset: control formula, sparsity time, recovery identity") {
    const ProblemSpec s = make_problem("ex4");
    CHECK(s.alpha == 0.1);
    CHECK(s.rho == 0.8);
    CHECK(s.box_a == -1.0);
    CHECK(s.box_b == 2.0);
    CHECK(s.outer_iters == 10);
    CHECK(s.train.resample_each_iter);
    CHECK(s.train.n_interior == 4096);
    CHECK(s.train.n_boundary == 1024);
    CHECK(s.train.n_initial == 256);
    CHECK(s.train.weights.w_b1 == 5.0);
    CHECK(s.train.weights.w_b2 == 5.0);

    Rng rng(3);
    // u vanishes for t beyond the critical time
    for (int t = 0; t < 200; ++t) {
        const Point q{rng.uniform(), rng.uniform(), rng.uniform(0.8212, 1.0)};
        CHECK(s.u_exact(q) == 0.0);
    }
    // u stays in the box and is zero exactly where |p| <= rho
    for (int t = 0; t < 500; ++t) {
        const Point q{rng.uniform(), rng.uniform(), rng.uniform()};
        const double u = s.u_exact(q), p = s.p_exact(q);
        CHECK(u >= s.box_a);
        CHECK(u <= s.box_b);
        if (std::abs(p) <= s.rho) CHECK(u == 0.0);
        if (u == 0.0) CHECK(std::abs(p) <= s.rho + 1e-12);
    }
    // active region exists before t*
    bool found_active = false;
    for (int t = 0; t < 500 && !found_active; ++t) {
        const Point q{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.0, 0.5)};
        found_active = s.u_exact(q) > 0.0;
    }
    CHECK(found_active);
}

namespace {

// analytic jets of the ex4 closed forms
JetValue jet_ybar(const ProblemSpec& s, const Point& q) {
    const double sr = 5.0 * std::sqrt(s.rho);
    JetValue j;
    const double s3 = std::sin(3 * pi * q[0]), c3 = std::cos(3 * pi * q[0]);
    const double s1 = std::sin(pi * q[1]), c1 = std::cos(pi * q[1]);
    j.value = sr * q[2] * s3 * s1;
    j.grad[0] = sr * q[2] * 3 * pi * c3 * s1;
    j.grad[1] = sr * q[2] * pi * s3 * c1;
    j.grad[2] = sr * s3 * s1;
    j.diag2[0] = -9 * pi * pi * j.value;
    j.diag2[1] = -pi * pi * j.value;
    j.diag2[2] = 0.0;
    return j;
}

JetValue jet_pbar(const ProblemSpec& s, const Point& q) {
    const double sr = 5.0 * std::sqrt(s.rho);
    JetValue j;
    const double sA = std::sin(pi * q[0]), cA = std::cos(pi * q[0]);
    const double sB = std::sin(pi * q[1]), cB = std::cos(pi * q[1]);
    j.value = sr * (q[2] - 1.0) * sA * sB;
    j.grad[0] = sr * (q[2] - 1.0) * pi * cA * sB;
    j.grad[1] = sr * (q[2] - 1.0) * pi * sA * cB;
    j.grad[2] = sr * sA * sB;
    j.diag2[0] = -pi * pi * j.value;
    j.diag2[1] = -pi * pi * j.value;
    j.diag2[2] = 0.0;
    return j;
}

}  // namespace

TEST_CASE("ex4 exact fields annihilate the optimality-system residuals pointwise") {
    const ProblemSpec s = make_problem("ex4");
    Rng rng(99);
    for (int t = 0; t < 300; ++t) {
        const Point q{rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98)};
        PdePoint pt;
        pt.x = q;
        pt.y = jet_ybar(s, q);
        pt.p = jet_pbar(s, q);
        pt.u_value = s.u_exact(q);
        pt.data = s.yd_fn(q);
        pt.f = s.f_rhs(q);
        pt.lambda = pt.p.value + s.alpha * pt.u_value;  // converged multiplier
        pt.z = pt.u_value;
        const auto r = interior_residuals(s, pt);
        REQUIRE(r.size() == 2);
        CHECK(std::abs(r[0]) <= 1e-10);
        CHECK(std::abs(r[1]) <= 1e-10);
        // stationarity through the recovery relation
        const double u_rec = s.recover_u(pt.p.value, pt.lambda, pt.z);
        CHECK(std::abs(u_rec - pt.u_value) <= 1e-12);
    }
}

TEST_CASE("interior residuals: hand-checked values and trivial kernels") {
    const ProblemSpec ex2 = make_problem("ex2");
    PdePoint q;
    q.y.value = 1.0;
    q.y.grad[0] = 2.0;
    q.y.diag2[0] = 3.0;
    q.u_value = 0.5;
    q.data = 0.3;
    const auto r = interior_residuals(ex2, q);
    CHECK(r[0] == doctest::Approx(-(1.0 / 12.0) * 3.0 + 1.0 * 2.0 - 0.5).epsilon(1e-14));  // 1.25
    CHECK(r[0] == doctest::Approx(1.25).epsilon(1e-12));

    const ProblemSpec ex1 = make_problem("ex1");
    PdePoint zero;
    zero.data = 0.0;
    zero.f = 0.0;
    zero.u_value = 17.0;  // arbitrary: y = 0 annihilates the state residual
    const auto r1 = interior_residuals(ex1, zero);
    CHECK(r1[0] == 0.0);
}

TEST_CASE("residual evaluators are pointwise pure") {
    const ProblemSpec s = make_problem("ex2");
    PdePoint q;
    q.y.value = 0.7;
    q.y.grad[0] = -1.1;
    q.y.diag2[0] = 2.2;
    q.p.value = 0.3;
    q.p.grad[0] = 0.9;
    q.p.diag2[0] = -0.4;
    q.u_value = 0.2;
    q.data = 0.3;
    const auto a = interior_residuals(s, q);
    const auto b = interior_residuals(s, q);
    CHECK(a == b);
}

TEST_CASE("objective_value: tracking zero, exact ex4 value, indicator flag") {
    const ProblemSpec ex2 = make_problem("ex2");
    const ScalarField y_d = ScalarField::sample(ex2.lattice, ex2.yd_fn);
    CHECK(objective_value(ex2, y_d, ScalarField(ex2.lattice, 0.0)) == doctest::Approx(0.0));
    // bound violation flips the indicator
    CHECK(std::isinf(objective_value(ex2, y_d, ScalarField(ex2.lattice, 0.4))));

    const ProblemSpec ex4 = make_problem("ex4");
    const ScalarField yb = ScalarField::sample(ex4.lattice, ex4.y_exact);
    const ScalarField ub = ScalarField::sample(ex4.lattice, ex4.u_exact);
    const double J = objective_value(ex4, yb, ub);
    CHECK(std::isfinite(J));
    // the L1 mass of the exact control is strictly positive
    double l1 = 0;
    for (std::size_t k = 0; k < ub.size(); ++k)
        l1 += ex4.lattice.quad_weight(k) * std::abs(ub[k]);
    CHECK(l1 > 0.0);
    CHECK(J > 0.0);
}

TEST_CASE("preset data is deterministic") {
    const ProblemSpec a = make_problem("ex1");
    const ProblemSpec b = make_problem("ex1");
    for (std::size_t k = 0; k < a.data.size(); ++k) CHECK(a.data[k] == b.data[k]);
}

TEST_CASE("provenance json includes resolved constants") {
    const ProblemSpec s = make_problem("ex1", {{"admm.beta", 0.25}});
    const std::string j = preset_provenance_json(s);
    CHECK(j.find("\"beta\": 0.25") != std::string::npos);
    CHECK(j.find("\"adam_iters\": 20000") != std::string::npos);
}
