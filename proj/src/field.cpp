#include "pdeopt/field.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pdeopt {

Lattice::Lattice(int dim, std::array<double, kMaxDim> lower, std::array<double, kMaxDim> upper,
                 std::array<int, kMaxDim> nodes)
    : dim_(dim), lower_(lower), upper_(upper), nodes_(nodes) {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("lattice dim must be 1, 2 or 3");
    size_ = 1;
    for (int a = 0; a < dim_; ++a) {
        if (nodes_[a] < 2) throw ConfigError("lattice needs >= 2 nodes per axis");
        if (!(upper_[a] > lower_[a])) throw ConfigError("lattice needs upper > lower");
        size_ *= static_cast<std::size_t>(nodes_[a]);
    }
    for (int a = dim_; a < kMaxDim; ++a) {
        lower_[a] = 0.0;
        upper_[a] = 0.0;
        nodes_[a] = 1;
    }
}

Lattice Lattice::line(double lo, double hi, int n) { return Lattice(1, {lo, 0, 0}, {hi, 0, 0}, {n, 1, 1}); }

Lattice Lattice::rect(double lo0, double hi0, int n0, double lo1, double hi1, int n1) {
    return Lattice(2, {lo0, lo1, 0}, {hi0, hi1, 0}, {n0, n1, 1});
}

Lattice Lattice::box(double lo0, double hi0, int n0, double lo1, double hi1, int n1, double lo2,
                     double hi2, int n2) {
    return Lattice(3, {lo0, lo1, lo2}, {hi0, hi1, hi2}, {n0, n1, n2});
}

bool Lattice::contains(const Point& x, double tol) const {
    for (int a = 0; a < dim_; ++a) {
        const double pad = tol * (upper_[a] - lower_[a]);
        if (x[a] < lower_[a] - pad || x[a] > upper_[a] + pad) return false;
    }
    return true;
}

double Lattice::quad_weight(std::size_t k) const {
    auto idx = unindex(k);
    double w = 1.0;
    for (int a = 0; a < dim_; ++a) {
        const double h = spacing(a);
        w *= (idx[a] == 0 || idx[a] == nodes_[a] - 1) ? 0.5 * h : h;
    }
    return w;
}

ScalarField::ScalarField(Lattice lattice, std::vector<double> values)
    : lattice_(std::move(lattice)), values_(std::move(values)) {
    if (values_.size() != lattice_.size()) throw ConfigError("field value count != lattice size");
}

ScalarField ScalarField::sample(const Lattice& lat, const std::function<double(const Point&)>& f) {
    ScalarField out(lat);
    for (std::size_t k = 0; k < lat.size(); ++k) out[k] = f(lat.coords(k));
    return out;
}

void ScalarField::check_finite(const char* what) const {
    for (double v : values_)
        if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + what);
}

double interp(const ScalarField& f, const Point& x) {
    const Lattice& lat = f.lattice();
    if (!lat.contains(x)) throw ConfigError("interp: point outside lattice bounding box");
    const int d = lat.dim();
    std::array<int, kMaxDim> base{0, 0, 0};
    std::array<double, kMaxDim> frac{0, 0, 0};
    for (int a = 0; a < d; ++a) {
        const double h = lat.spacing(a);
        double t = (x[a] - lat.lower(a)) / h;
        int j = static_cast<int>(std::floor(t));
        if (j < 0) j = 0;
        if (j > lat.nodes(a) - 2) j = lat.nodes(a) - 2;
        base[a] = j;
        frac[a] = t - j;
    }
    double acc = 0.0;
    const int corners = 1 << d;
    for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        std::array<int, kMaxDim> idx = base;
        for (int a = 0; a < d; ++a) {
            if (c & (1 << a)) {
                idx[a] += 1;
                w *= frac[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        acc += w * f[lat.index(idx)];
    }
    return acc;
}

double l2_norm(const ScalarField& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f.lattice().quad_weight(k) * f[k] * f[k];
    return std::sqrt(s);
}

double inner(const ScalarField& a, const ScalarField& b) {
    if (!(a.lattice() == b.lattice())) throw ConfigError("inner: lattice mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a.lattice().quad_weight(k) * a[k] * b[k];
    return s;
}

double l2_norm_diff(const ScalarField& a, const ScalarField& b) {
    if (!(a.lattice() == b.lattice())) throw ConfigError("l2_norm_diff: lattice mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += a.lattice().quad_weight(k) * d * d;
    }
    return std::sqrt(s);
}

ScalarField add_noise(const ScalarField& f, double delta, Rng& rng) {
    if (delta < 0) throw ConfigError("add_noise: delta must be >= 0");
    ScalarField out = f;
    if (delta == 0.0) return out;
    const double scale = delta * l2_norm(f);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += scale * rng.normal();
    return out;
}

static const char* axis_name(int dim, int axis) {
    static const char* names2[] = {"x1", "x2"};
    static const char* names3[] = {"x1", "x2", "t"};
    return dim == 3 ? names3[axis] : names2[axis];
}

void write_field_csv(std::ostream& os, const ScalarField& f) {
    const Lattice& lat = f.lattice();
    for (int a = 0; a < lat.dim(); ++a) os << axis_name(lat.dim(), a) << ',';
    os << "value\n";
    char buf[32];
    for (std::size_t k = 0; k < f.size(); ++k) {
        const Point x = lat.coords(k);
        for (int a = 0; a < lat.dim(); ++a) {
            std::snprintf(buf, sizeof buf, "%.17g", x[a]);
            os << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", f[k]);
        os << buf << '\n';
    }
}

void write_field_csv_file(const std::string& path, const ScalarField& f) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream os(tmp);
        if (!os) throw ConfigError("cannot open " + tmp.string());
        write_field_csv(os, f);
    }
    fs::rename(tmp, target);
}

ScalarField read_field_csv_file(const std::string& path, const Lattice& expected) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    std::string line;
    std::getline(is, line);  // header
    std::vector<double> vals;
    vals.reserve(expected.size());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto pos = line.rfind(',');
        vals.push_back(std::stod(line.substr(pos + 1)));
    }
    return ScalarField(expected, std::move(vals));
}

}  // namespace pdeopt
