#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/rng.hpp"

namespace pdeopt {

inline constexpr int kMaxDim = 3;

using Point = std::array<double, kMaxDim>;

// Uniform tensor-product lattice in 1, 2 or 3 dimensions (space, or
// space+time with time as the last axis). Node j on axis a sits at
// lower[a] + j*spacing(a).
class Lattice {
public:
    Lattice(int dim, std::array<double, kMaxDim> lower, std::array<double, kMaxDim> upper,
            std::array<int, kMaxDim> nodes);

    static Lattice line(double lo, double hi, int n);
    static Lattice rect(double lo0, double hi0, int n0, double lo1, double hi1, int n1);
    static Lattice box(double lo0, double hi0, int n0, double lo1, double hi1, int n1,
                       double lo2, double hi2, int n2);

    int dim() const { return dim_; }
    double lower(int axis) const { return lower_[axis]; }
    double upper(int axis) const { return upper_[axis]; }
    int nodes(int axis) const { return nodes_[axis]; }
    double spacing(int axis) const { return (upper_[axis] - lower_[axis]) / (nodes_[axis] - 1); }
    std::size_t size() const { return size_; }

    // Storage order: axis 0 varies fastest.
    std::size_t index(std::array<int, kMaxDim> idx) const {
        std::size_t k = 0;
        for (int a = dim_ - 1; a >= 0; --a) k = k * nodes_[a] + idx[a];
        return k;
    }
    std::array<int, kMaxDim> unindex(std::size_t k) const {
        std::array<int, kMaxDim> idx{0, 0, 0};
        for (int a = 0; a < dim_; ++a) {
            idx[a] = static_cast<int>(k % nodes_[a]);
            k /= nodes_[a];
        }
        return idx;
    }
    Point coords(std::size_t k) const {
        auto idx = unindex(k);
        Point x{0, 0, 0};
        for (int a = 0; a < dim_; ++a) x[a] = lower_[a] + idx[a] * spacing(a);
        return x;
    }
    bool contains(const Point& x, double tol = 1e-12) const;

    // Trapezoidal quadrature weight of node k (cell volume, halved on each
    // boundary layer the node touches).
    double quad_weight(std::size_t k) const;

    bool operator==(const Lattice& o) const = default;

private:
    int dim_;
    std::array<double, kMaxDim> lower_;
    std::array<double, kMaxDim> upper_;
    std::array<int, kMaxDim> nodes_;
    std::size_t size_;
};

// Nodal scalar values on a lattice. Immutable lattice, mutable values.
class ScalarField {
public:
    ScalarField() : ScalarField(Lattice::line(0.0, 1.0, 2), 0.0) {}  // empty placeholder
    explicit ScalarField(Lattice lattice, double fill = 0.0)
        : lattice_(std::move(lattice)), values_(lattice_.size(), fill) {}
    ScalarField(Lattice lattice, std::vector<double> values);

    const Lattice& lattice() const { return lattice_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    double operator[](std::size_t k) const { return values_[k]; }
    double& operator[](std::size_t k) { return values_[k]; }
    std::size_t size() const { return values_.size(); }

    // Fill from a nodal function of coordinates.
    static ScalarField sample(const Lattice& lat, const std::function<double(const Point&)>& f);

    void check_finite(const char* what) const;

private:
    Lattice lattice_;
    std::vector<double> values_;
};

// Multilinear interpolation; exact at nodes and for per-axis affine fields.
// Throws ConfigError when x lies outside the closed bounding box.
double interp(const ScalarField& f, const Point& x);

// Discrete L2(Omega) norm with trapezoidal weights: sqrt(sum_i w_i f_i^2).
double l2_norm(const ScalarField& f);

// Trapezoidal L2 inner product.
double inner(const ScalarField& a, const ScalarField& b);

double l2_norm_diff(const ScalarField& a, const ScalarField& b);

// f_i + delta * ||f|| * g_i with g_i i.i.d. standard normal from `rng`.
ScalarField add_noise(const ScalarField& f, double delta, Rng& rng);

// CSV dump: header "x1[,x2[,t]],value", nodes in storage order,
// 17 significant digits.
void write_field_csv(std::ostream& os, const ScalarField& f);
void write_field_csv_file(const std::string& path, const ScalarField& f);
ScalarField read_field_csv_file(const std::string& path, const Lattice& expected);

}  // namespace pdeopt
