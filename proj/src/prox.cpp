#include "pdeopt/prox.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

namespace pdeopt {

void TvConfig::validate() const {
    if (!(zeta > 0)) throw ConfigError("tv penalty zeta must be > 0");
    if (inner_iters < 1) throw ConfigError("tv inner iterations must be >= 1");
}

ScalarField project_box(const ScalarField& v, double a, double b) {
    if (!(a <= b)) throw ConfigError("project_box: needs a <= b");
    ScalarField out = v;
    for (double& x : out.values()) x = std::max(a, std::min(x, b));
    return out;
}

double shrink_scalar(double v, double zeta) {
    const double m = std::abs(v) - zeta;
    return m > 0.0 ? (v > 0.0 ? m : -m) : 0.0;
}

ScalarField shrink(const ScalarField& v, double zeta) {
    if (zeta < 0) throw ConfigError("shrink: zeta must be >= 0");
    ScalarField out = v;
    for (double& x : out.values()) x = shrink_scalar(x, zeta);
    return out;
}

ScalarField prox_sparse_box(const ScalarField& v, double zeta, double a, double b) {
    return project_box(shrink(v, zeta), a, b);
}

namespace {

std::mutex fftw_plan_mutex;

// Periodic forward difference along `axis` in lattice units: (Dq)_i =
// q_{i+1} - q_i. Working in plain differences keeps the inner splitting's
// conditioning independent of the mesh size; the 1/h of the continuous
// gradient moves into the per-axis shrinkage weight instead.
void diff_forward(const ScalarField& q, int axis, std::vector<double>& out) {
    const Lattice& lat = q.lattice();
    out.resize(lat.size());
    for (std::size_t k = 0; k < lat.size(); ++k) {
        auto idx = lat.unindex(k);
        auto up = idx;
        up[axis] = (idx[axis] + 1) % lat.nodes(axis);
        out[k] = q[lat.index(up)] - q[k];
    }
}

// Adjoint: (D^T p)_i = p_{i-1} - p_i with periodic wrap.
void diff_adjoint_add(const Lattice& lat, const std::vector<double>& p, int axis, double scale,
                      std::vector<double>& acc) {
    for (std::size_t k = 0; k < lat.size(); ++k) {
        auto idx = lat.unindex(k);
        auto dn = idx;
        dn[axis] = (idx[axis] - 1 + lat.nodes(axis)) % lat.nodes(axis);
        acc[k] += scale * (p[lat.index(dn)] - p[k]);
    }
}

// Solves (1 + zeta*sigma(k)) zhat = rhshat through the real DFT, where
// sigma(k) = sum_axes 2(1 - cos(2 pi k_a / N_a)) is the symbol of D^T D.
class CirculantSolver {
public:
    CirculantSolver(const Lattice& lat, double zeta) : lat_(lat) {
        const int d = lat.dim();
        n0_ = lat.nodes(0);
        n1_ = d == 2 ? lat.nodes(1) : 1;
        real_.resize(lat.size());
        const std::size_t spec_n = std::size_t(n1_) * (n0_ / 2 + 1);
        spec_.resize(spec_n);
        denom_.resize(spec_n);
        for (int k1 = 0; k1 < n1_; ++k1) {
            for (int k0 = 0; k0 <= n0_ / 2; ++k0) {
                double sigma = 2.0 * (1.0 - std::cos(2.0 * std::numbers::pi * k0 / n0_));
                if (d == 2) sigma += 2.0 * (1.0 - std::cos(2.0 * std::numbers::pi * k1 / n1_));
                denom_[std::size_t(k1) * (n0_ / 2 + 1) + k0] = 1.0 + zeta * sigma;
            }
        }
        std::lock_guard<std::mutex> lock(fftw_plan_mutex);
        if (d == 1) {
            fwd_ = fftw_plan_dft_r2c_1d(n0_, real_.data(),
                                        reinterpret_cast<fftw_complex*>(spec_.data()),
                                        FFTW_ESTIMATE);
            bwd_ = fftw_plan_dft_c2r_1d(n0_, reinterpret_cast<fftw_complex*>(spec_.data()),
                                        real_.data(), FFTW_ESTIMATE);
        } else {
            // FFTW is row-major with the last dimension fastest; axis 0 of the
            // lattice varies fastest, so it is FFTW's last dimension.
            fwd_ = fftw_plan_dft_r2c_2d(n1_, n0_, real_.data(),
                                        reinterpret_cast<fftw_complex*>(spec_.data()),
                                        FFTW_ESTIMATE);
            bwd_ = fftw_plan_dft_c2r_2d(n1_, n0_, reinterpret_cast<fftw_complex*>(spec_.data()),
                                        real_.data(), FFTW_ESTIMATE);
        }
    }

    ~CirculantSolver() {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex);
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }

    void solve(const std::vector<double>& rhs, std::vector<double>& z) {
        std::copy(rhs.begin(), rhs.end(), real_.begin());
        fftw_execute(fwd_);
        const double inv_n = 1.0 / (double(n0_) * n1_);
        for (std::size_t k = 0; k < spec_.size(); ++k) spec_[k] *= inv_n / denom_[k];
        fftw_execute(bwd_);
        z.assign(real_.begin(), real_.end());
    }

private:
    const Lattice& lat_;
    int n0_, n1_;
    std::vector<double> real_, denom_;
    std::vector<std::complex<double>> spec_;
    fftw_plan fwd_, bwd_;
};

}  // namespace

ScalarField prox_tv(const ScalarField& v, double gamma_over_beta, const TvConfig& cfg) {
    cfg.validate();
    if (gamma_over_beta < 0) throw ConfigError("prox_tv: gamma must be >= 0");
    const Lattice& lat = v.lattice();
    const int d = lat.dim();
    if (d > 2) throw ConfigError("prox_tv: 1D and 2D lattices only");
    const double zeta = cfg.zeta;
    // per-axis shrinkage weight: gamma/beta * |d/dx| in lattice units
    std::array<double, kMaxDim> thresh{};
    for (int a = 0; a < d; ++a) thresh[a] = gamma_over_beta / lat.spacing(a) / zeta;
    const std::size_t n = lat.size();

    CirculantSolver solver(lat, zeta);
    std::vector<std::vector<double>> w(d, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> mu(d, std::vector<double>(n, 0.0));
    std::vector<double> rhs(n), z(v.values().begin(), v.values().end());
    std::vector<double> dz;

    ScalarField zf = v;
    for (int j = 0; j < cfg.inner_iters; ++j) {
        // z-step
        std::copy(v.values().begin(), v.values().end(), rhs.begin());
        for (int a = 0; a < d; ++a) {
            std::vector<double> q(n);
            for (std::size_t k = 0; k < n; ++k) q[k] = w[a][k] + mu[a][k] / zeta;
            diff_adjoint_add(lat, q, a, zeta, rhs);
        }
        solver.solve(rhs, z);
        std::copy(z.begin(), z.end(), zf.values().begin());
        // w-step and multiplier update per axis
        for (int a = 0; a < d; ++a) {
            diff_forward(zf, a, dz);
            for (std::size_t k = 0; k < n; ++k) {
                const double wa = shrink_scalar(dz[k] - mu[a][k] / zeta, thresh[a]);
                w[a][k] = wa;
                mu[a][k] -= zeta * (dz[k] - wa);
            }
        }
        for (double x : z)
            if (!std::isfinite(x))
                throw NumericalError("prox_tv: non-finite iterate at inner iteration " +
                                     std::to_string(j));
    }
    return zf;
}

double discrete_tv(const ScalarField& f) {
    const Lattice& lat = f.lattice();
    double tv = 0.0;
    for (int a = 0; a < lat.dim(); ++a) {
        double transverse = 1.0;
        for (int b = 0; b < lat.dim(); ++b)
            if (b != a) transverse *= lat.spacing(b);
        for (std::size_t k = 0; k < lat.size(); ++k) {
            auto idx = lat.unindex(k);
            if (idx[a] + 1 >= lat.nodes(a)) continue;
            auto up = idx;
            up[a] = idx[a] + 1;
            tv += std::abs(f[lat.index(up)] - f[k]) * transverse;
        }
    }
    return tv;
}

}  // namespace pdeopt
