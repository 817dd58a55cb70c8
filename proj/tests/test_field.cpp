#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "pdeopt/field.hpp"

using namespace pdeopt;
using std::numbers::pi;

TEST_CASE("lattice invariants are enforced") {
    CHECK_THROWS_AS(Lattice::line(0, 1, 1), ConfigError);
    CHECK_THROWS_AS(Lattice::line(1, 1, 10), ConfigError);
    const Lattice lat = Lattice::rect(0, 1, 11, -1, 2, 7);
    CHECK(lat.size() == 77);
    CHECK(lat.spacing(0) == doctest::Approx(0.1));
    CHECK(lat.spacing(1) == doctest::Approx(0.5));
    // index/unindex round trip
    for (std::size_t k = 0; k < lat.size(); ++k) CHECK(lat.index(lat.unindex(k)) == k);
}

TEST_CASE("interp reproduces constants and 1D linear values") {
    const Lattice lat = Lattice::line(0, 1, 11);
    ScalarField c(lat, 4.5);
    CHECK(interp(c, {0.37, 0, 0}) == doctest::Approx(4.5).epsilon(1e-15));

    ScalarField lin(lat, 0.0);
    lin[lat.nodes(0) - 1] = 1.0;
    for (int i = 0; i < lat.nodes(0); ++i) lin[i] = i / 10.0;
    CHECK(interp(lin, {0.25, 0, 0}) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("interp is exact on nodes and for bilinear fields") {
    Rng rng(42);
    const Lattice lat = Lattice::rect(0, 2, 9, -1, 1, 13);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2), c = rng.uniform(-2, 2),
                 d = rng.uniform(-2, 2);
    auto bilin = [&](const Point& x) { return a + b * x[0] + c * x[1] + d * x[0] * x[1]; };
    const ScalarField f = ScalarField::sample(lat, bilin);
    // node exactness
    for (std::size_t k = 0; k < lat.size(); ++k) {
        const Point x = lat.coords(k);
        CHECK(std::abs(interp(f, x) - f[k]) <= 1e-14 * std::max(1.0, std::abs(f[k])));
    }
    // random interior points against the closed form
    double max_err = 0;
    for (int t = 0; t < 100; ++t) {
        Point x{rng.uniform(0, 2), rng.uniform(-1, 1), 0};
        max_err = std::max(max_err, std::abs(interp(f, x) - bilin(x)));
    }
    CHECK(max_err <= 1e-12);
    CHECK_THROWS_AS(interp(f, {2.5, 0, 0}), ConfigError);
}

TEST_CASE("l2_norm: unit constant, zero, and sine integral") {
    const Lattice lat = Lattice::line(0, 1, 101);
    CHECK(l2_norm(ScalarField(lat, 1.0)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(l2_norm(ScalarField(lat, 0.0)) == 0.0);
    const ScalarField s =
        ScalarField::sample(lat, [](const Point& x) { return std::sin(2 * pi * x[0]); });
    CHECK(std::abs(l2_norm(s) - std::sqrt(0.5)) <= 1e-3);
}

TEST_CASE("l2_norm triangle inequality and homogeneity") {
    Rng rng(7);
    const Lattice lat = Lattice::rect(0, 1, 17, 0, 1, 19);
    for (int t = 0; t < 25; ++t) {
        ScalarField f(lat), g(lat);
        for (std::size_t k = 0; k < lat.size(); ++k) {
            f[k] = rng.normal();
            g[k] = rng.normal();
        }
        ScalarField sum = f;
        for (std::size_t k = 0; k < lat.size(); ++k) sum[k] += g[k];
        CHECK(l2_norm(sum) <= l2_norm(f) + l2_norm(g) + 1e-12);
        const double s = rng.uniform(-3, 3);
        ScalarField sf = f;
        for (std::size_t k = 0; k < lat.size(); ++k) sf[k] *= s;
        CHECK(l2_norm(sf) == doctest::Approx(std::abs(s) * l2_norm(f)).epsilon(1e-12));
    }
}

TEST_CASE("add_noise: delta=0 identity, reproducibility, empirical std") {
    const Lattice lat = Lattice::box(0, 1, 22, 0, 1, 22, 0, 1, 22);  // >= 1e4 nodes
    Rng base(99);
    ScalarField f = ScalarField::sample(lat, [](const Point& x) { return 1 + x[0] * x[1]; });

    Rng r0 = base.derive("noise");
    const ScalarField same = add_noise(f, 0.0, r0);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(same[k] == f[k]);

    Rng r1 = base.derive("noise");
    Rng r2 = base.derive("noise");
    const ScalarField n1 = add_noise(f, 0.1, r1);
    const ScalarField n2 = add_noise(f, 0.1, r2);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(n1[k] == n2[k]);  // bit reproducible

    const double scale = 0.1 * l2_norm(f);
    double var = 0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double g = (n1[k] - f[k]) / scale;
        var += g * g;
    }
    const double stddev = std::sqrt(var / f.size());
    CHECK(stddev > 0.95);
    CHECK(stddev < 1.05);
}

TEST_CASE("field csv round trip keeps 17 significant digits") {
    const Lattice lat = Lattice::line(0, 1, 5);
    ScalarField f(lat);
    Rng rng(3);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = rng.normal();
    const std::string path = "/tmp/pdeopt_field_test.csv";
    write_field_csv_file(path, f);
    const ScalarField g = read_field_csv_file(path, lat);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(f[k] == g[k]);

    std::ostringstream os;
    write_field_csv(os, f);
    CHECK(os.str().substr(0, 9) == "x1,value\n");
}
