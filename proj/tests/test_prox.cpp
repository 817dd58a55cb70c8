#include <cmath>

#include "doctest.h"
#include "pdeopt/prox.hpp"
#include "pdeopt/rng.hpp"

using namespace pdeopt;

namespace {
const Lattice unit_line(int n = 9) { return Lattice::line(0, 1, n); }
}  // namespace

TEST_CASE("project_box clamps, honors one-sided bounds, idempotent") {
    const Lattice lat = unit_line(3);
    ScalarField v(lat, 3.0);
    CHECK(project_box(v, -1, 2)[0] == 2.0);
    ScalarField w(lat, 0.5);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(project_box(w, -inf, 0.3)[0] == 0.3);
    ScalarField in(lat, 0.1);
    const ScalarField once = project_box(in, -1, 2);
    for (std::size_t k = 0; k < in.size(); ++k) CHECK(once[k] == in[k]);
    CHECK_THROWS_AS(project_box(v, 2, -1), ConfigError);
}

TEST_CASE("shrink: soft thresholding examples") {
    const Lattice lat = unit_line(3);
    ScalarField a(lat, 2.0), b(lat, -0.5), c(lat, 10.0);
    CHECK(shrink(a, 1.0)[0] == 1.0);
    CHECK(shrink(b, 1.0)[0] == 0.0);
    CHECK(shrink(c, 8.0)[0] == 2.0);  // rho/beta = 0.8/0.1
    const ScalarField id = shrink(b, 0.0);
    for (std::size_t k = 0; k < b.size(); ++k) CHECK(id[k] == b[k]);
}

TEST_CASE("prox_sparse_box composes shrink then projection") {
    const Lattice lat = unit_line(3);
    ScalarField v(lat, 12.0);
    CHECK(prox_sparse_box(v, 8.0, -1, 2)[0] == 2.0);  // shrink -> 4, project -> 2
    ScalarField z(lat, 0.0);
    CHECK(prox_sparse_box(z, 8.0, -1, 2)[0] == 0.0);
}

TEST_CASE("prox_sparse_box matches brute-force argmin on random scalars") {
    Rng rng(12345);
    const Lattice lat = unit_line(2);
    int checked = 0;
    for (int t = 0; t < 1000; ++t) {
        const double v = rng.uniform(-12, 12);
        const double zeta = rng.uniform(0, 6);
        const double a = -rng.uniform(0.01, 5);
        const double b = rng.uniform(0.01, 5);
        ScalarField f(lat, v);
        const double got = prox_sparse_box(f, zeta, a, b)[0];
        const double lo = a, hi = b;  // the box is the feasible set
        const int grid = 100000;
        double best = lo, bestF = 1e300;
        for (int i = 0; i <= grid; ++i) {
            const double z = lo + (hi - lo) * i / grid;
            const double F = zeta * std::abs(z) + 0.5 * (z - v) * (z - v);
            if (F < bestF) {
                bestF = F;
                best = z;
            }
        }
        CHECK(std::abs(got - best) <= std::max((hi - lo) / grid, 1e-9));
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("prox order is project(shrink(.)) as the closed form requires") {
    // P(S(v)) and S(P(v)) differ when the shrink lands outside the box
    const Lattice lat = unit_line(3);
    ScalarField v(lat, 12.0);
    const double ps = prox_sparse_box(v, 8.0, -1, 2)[0];  // P(S(12)) = P(4) = 2
    const double sp = shrink(project_box(v, -1, 2), 8.0)[0];  // S(P(12)) = S(2) = 0
    CHECK(ps == 2.0);
    CHECK(sp == 0.0);
}

TEST_CASE("prox_tv: constant input is a fixed point") {
    const Lattice lat = unit_line(16);
    ScalarField c(lat, -2.5);
    TvConfig cfg{5.0, 80};
    const ScalarField out = prox_tv(c, 0.4, cfg);
    for (std::size_t k = 0; k < c.size(); ++k) CHECK(out[k] == doctest::Approx(-2.5).epsilon(1e-10));
}

TEST_CASE("prox_tv: zero gamma returns the input to solver tolerance") {
    Rng rng(8);
    const Lattice lat = unit_line(24);
    ScalarField v(lat);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = rng.uniform(-1, 1);
    TvConfig cfg{1e-3, 400};
    const ScalarField out = prox_tv(v, 0.0, cfg);
    for (std::size_t k = 0; k < v.size(); ++k) CHECK(std::abs(out[k] - v[k]) <= 1e-8);
}

TEST_CASE("prox_tv beats a long projected-subgradient reference on a 1D jump") {
    const int n = 16;
    const Lattice lat = Lattice::line(0, 1, n);
    ScalarField v(lat);
    for (int i = 0; i < n; ++i) v[i] = i < n / 2 ? 0.0 : 1.0;
    const double g = 0.1;
    const double h = lat.spacing(0);

    auto objective = [&](const ScalarField& z) {
        double F = 0;
        for (int i = 0; i < n; ++i) {
            const double d = (z[(i + 1) % n] - z[i]) / h;
            F += g * std::abs(d);
            F += 0.5 * (z[i] - v[i]) * (z[i] - v[i]);
        }
        return F;
    };

    TvConfig cfg{5.0, 4000};
    const ScalarField zp = prox_tv(v, g, cfg);

    // subgradient descent, diminishing steps, 1e5 iterations
    ScalarField z = v;
    double best = objective(z);
    ScalarField zbest = z;
    for (int it = 0; it < 100000; ++it) {
        std::vector<double> sub(n, 0.0);
        for (int i = 0; i < n; ++i) {
            const double d = (z[(i + 1) % n] - z[i]) / h;
            const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            sub[(i + 1) % n] += g * s / h;
            sub[i] -= g * s / h;
            sub[i] += z[i] - v[i];
        }
        const double t = 0.05 / std::sqrt(1.0 + it);
        for (int i = 0; i < n; ++i) z[i] -= t * sub[i];
        const double F = objective(z);
        if (F < best) {
            best = F;
            zbest = z;
        }
    }
    CHECK(objective(zp) <= best * (1 + 1e-4));
}

TEST_CASE("2D tv prox smooths a noisy plateau without increasing TV") {
    Rng rng(17);
    const Lattice lat = Lattice::rect(0, 1, 17, 0, 1, 17);
    ScalarField v(lat);
    for (std::size_t k = 0; k < v.size(); ++k) {
        const Point x = lat.coords(k);
        v[k] = (x[0] > 0.5 ? 1.0 : 0.0) + 0.1 * rng.normal();
    }
    TvConfig cfg{5.0, 200};
    const ScalarField z = prox_tv(v, 0.05, cfg);
    CHECK(discrete_tv(z) < discrete_tv(v));
    for (double x : z.values()) CHECK(std::isfinite(x));
}

TEST_CASE("prox_tv validates its configuration") {
    TvConfig bad{0.0, 80};
    const Lattice lat = unit_line(8);
    ScalarField v(lat, 1.0);
    CHECK_THROWS_AS(prox_tv(v, 0.1, bad), ConfigError);
    const Lattice lat3 = Lattice::box(0, 1, 4, 0, 1, 4, 0, 1, 4);
    ScalarField v3(lat3, 1.0);
    TvConfig cfg{1.0, 10};
    CHECK_THROWS_AS(prox_tv(v3, 0.1, cfg), ConfigError);
}

TEST_CASE("discrete_tv measures piecewise-constant jumps") {
    const Lattice lat = Lattice::line(0, 1, 101);
    ScalarField u(lat);
    for (int i = 0; i < 101; ++i) {
        const double x = i / 100.0;
        u[i] = (x >= 0.25 && x <= 0.75) ? 1.0 : 0.2;
    }
    CHECK(discrete_tv(u) == doctest::Approx(1.6).epsilon(1e-12));
}
