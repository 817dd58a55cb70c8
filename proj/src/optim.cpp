#include "pdeopt/optim.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>

namespace pdeopt {

void OptConfig::validate() const {
    if (!(adam_lr > 0)) throw ConfigError("adam learning rate must be > 0");
    if (!(wolfe_c1 > 0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1))
        throw ConfigError("wolfe constants need 0 < c1 < c2 < 1");
    if (lbfgs_memory < 1) throw ConfigError("lbfgs memory must be >= 1");
    if (adam_iters < 0 || lbfgs_iters < 0) throw ConfigError("iteration counts must be >= 0");
}

static double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

static double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

OptResult adam_run(const GradOracle& oracle, std::vector<double> theta0, const OptConfig& cfg,
                   std::vector<TraceRow>* trace) {
    cfg.validate();
    const std::size_t n = theta0.size();
    OptResult res;
    res.theta = std::move(theta0);
    std::vector<double> g(n), m(n, 0.0), v(n, 0.0);
    double b1t = 1.0, b2t = 1.0;
    for (int t = 1; t <= cfg.adam_iters; ++t) {
        const double f = oracle(res.theta, g);
        ++res.oracle_calls;
        if (!std::isfinite(f))
            throw NumericalError("adam: non-finite loss at step " + std::to_string(t));
        res.loss = f;
        res.grad_norm = norm2(g);
        if (trace) trace->push_back({t - 1, f, res.grad_norm});
        b1t *= cfg.adam_beta1;
        b2t *= cfg.adam_beta2;
        const double c1 = 1.0 / (1.0 - b1t), c2 = 1.0 / (1.0 - b2t);
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            res.theta[i] -= cfg.adam_lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + cfg.adam_eps);
        }
        res.iterations = t;
        if (res.grad_norm <= cfg.grad_tol) break;
    }
    return res;
}

namespace {

struct LineSearchResult {
    bool ok = false;
    double alpha = 0.0;
    double f = 0.0;
};

// Strong Wolfe line search (bracket + zoom). phi(a) = f(theta + a*d).
class WolfeSearch {
public:
    WolfeSearch(const GradOracle& oracle, std::span<const double> theta,
                std::span<const double> d, double f0, double dphi0, const OptConfig& cfg,
                std::vector<double>& theta_buf, std::vector<double>& grad_buf, long& calls)
        : oracle_(oracle), theta_(theta), d_(d), f0_(f0), dphi0_(dphi0), cfg_(cfg),
          xt_(theta_buf), gt_(grad_buf), calls_(calls) {}

    LineSearchResult run(double alpha_init) {
        double a_prev = 0.0, f_prev = f0_, dphi_prev = dphi0_;
        double a = alpha_init;
        for (int j = 0; j < 20; ++j) {
            const auto [f, dphi] = eval(a);
            if (!std::isfinite(f)) {
                // shrink back into the finite region
                a = 0.5 * (a_prev + a);
                continue;
            }
            if (f > f0_ + cfg_.wolfe_c1 * a * dphi0_ || (j > 0 && f >= f_prev))
                return zoom(a_prev, f_prev, dphi_prev, a, f, dphi);
            if (std::abs(dphi) <= -cfg_.wolfe_c2 * dphi0_) return refine(a, f, dphi);
            if (dphi >= 0.0) return zoom(a, f, dphi, a_prev, f_prev, dphi_prev);
            a_prev = a;
            f_prev = f;
            dphi_prev = dphi;
            a *= 2.0;
        }
        return {};
    }

private:
    std::pair<double, double> eval(double a) {
        for (std::size_t i = 0; i < theta_.size(); ++i) xt_[i] = theta_[i] + a * d_[i];
        const double f = oracle_(xt_, gt_);
        ++calls_;
        return {f, dot(gt_, d_)};
    }

    // One interpolation step toward the 1-D minimizer when the accepted step
    // is still crude; keeps curvature pairs close to exact-line-search ones.
    LineSearchResult refine(double a, double f, double dphi) {
        if (std::abs(dphi) <= 0.1 * std::abs(dphi0_)) return {true, a, f};
        const double a2 = cubic_min(0.0, f0_, dphi0_, a, f, dphi);
        if (std::isfinite(a2) && a2 > 1e-12 && a2 < 8.0 * a && std::abs(a2 - a) > 1e-12 * a) {
            const auto [f2, dphi2] = eval(a2);
            if (std::isfinite(f2) && f2 <= f && f2 <= f0_ + cfg_.wolfe_c1 * a2 * dphi0_ &&
                std::abs(dphi2) <= -cfg_.wolfe_c2 * dphi0_)
                return {true, a2, f2};
            eval(a);  // restore the evaluation at the accepted alpha
        }
        return {true, a, f};
    }

    // minimizer of the cubic fitting (a1,f1,d1), (a2,f2,d2); NaN on failure
    static double cubic_min(double a1, double f1, double d1, double a2, double f2, double d2) {
        const double h1 = d1 + d2 - 3.0 * (f1 - f2) / (a1 - a2);
        const double disc = h1 * h1 - d1 * d2;
        if (disc < 0) return std::numeric_limits<double>::quiet_NaN();
        const double h2 = std::copysign(std::sqrt(disc), a2 - a1);
        return a2 - (a2 - a1) * (d2 + h2 - h1) / (d2 - d1 + 2.0 * h2);
    }

    LineSearchResult zoom(double lo, double flo, double dlo, double hi, double fhi, double dhi) {
        for (int j = 0; j < 40; ++j) {
            double a = cubic_min(lo, flo, dlo, hi, fhi, dhi);
            const double left = std::min(lo, hi), right = std::max(lo, hi);
            const double margin = 0.1 * (right - left);
            if (!std::isfinite(a) || a < left + margin || a > right - margin)
                a = 0.5 * (lo + hi);
            const auto [f, dphi] = eval(a);
            if (!std::isfinite(f) || f > f0_ + cfg_.wolfe_c1 * a * dphi0_ || f >= flo) {
                hi = a;
                fhi = f;
                dhi = dphi;
            } else {
                if (std::abs(dphi) <= -cfg_.wolfe_c2 * dphi0_) return {true, a, f};
                if (dphi * (hi - lo) >= 0.0) {
                    hi = lo;
                    fhi = flo;
                    dhi = dlo;
                }
                lo = a;
                flo = f;
                dlo = dphi;
            }
            if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
        return {};
    }

    const GradOracle& oracle_;
    std::span<const double> theta_;
    std::span<const double> d_;
    double f0_, dphi0_;
    const OptConfig& cfg_;
    std::vector<double>& xt_;
    std::vector<double>& gt_;
    long& calls_;
};

}  // namespace

OptResult lbfgs_run(const GradOracle& oracle, std::vector<double> theta0, const OptConfig& cfg,
                    std::vector<TraceRow>* trace) {
    cfg.validate();
    const std::size_t n = theta0.size();
    OptResult res;
    res.theta = std::move(theta0);
    std::vector<double> g(n);
    double f = oracle(res.theta, g);
    ++res.oracle_calls;
    if (!std::isfinite(f)) throw NumericalError("lbfgs: non-finite loss at start");
    res.loss = f;
    res.grad_norm = norm2(g);
    if (trace) trace->push_back({0, f, res.grad_norm});

    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    std::vector<double> d(n), xt(n), gt(n), q(n), alpha_buf;
    double gamma = 1.0;

    for (int it = 1; it <= cfg.lbfgs_iters; ++it) {
        if (res.grad_norm <= cfg.grad_tol) break;
        // two-loop recursion: d = -H g
        q.assign(g.begin(), g.end());
        alpha_buf.assign(S.size(), 0.0);
        for (int k = static_cast<int>(S.size()) - 1; k >= 0; --k) {
            alpha_buf[k] = rho[k] * dot(S[k], q);
            for (std::size_t i = 0; i < n; ++i) q[i] -= alpha_buf[k] * Y[k][i];
        }
        for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
        for (std::size_t k = 0; k < S.size(); ++k) {
            const double beta = rho[k] * dot(Y[k], q);
            for (std::size_t i = 0; i < n; ++i) q[i] += (alpha_buf[k] - beta) * S[k][i];
        }
        for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];

        double dphi0 = dot(g, d);
        if (!(dphi0 < 0.0)) {  // not a descent direction: reset to steepest descent
            for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
            dphi0 = -res.grad_norm * res.grad_norm;
            S.clear();
            Y.clear();
            rho.clear();
        }

        // a scaled first trial before any curvature information exists
        const double alpha_init = S.empty() && it == 1 ? std::min(1.0, 1.0 / res.grad_norm) : 1.0;
        WolfeSearch ws(oracle, res.theta, d, f, dphi0, cfg, xt, gt, res.oracle_calls);
        LineSearchResult ls = ws.run(alpha_init);
        bool via_fallback = false;
        double f_new;
        if (ls.ok) {
            // the line search's last evaluation was at the accepted alpha,
            // so xt and gt already hold the new point
            f_new = ls.f;
        } else {
            // fall back: backtracking Armijo on steepest descent
            for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
            dphi0 = -res.grad_norm * res.grad_norm;
            double a = 1.0;
            bool found = false;
            f_new = f;
            for (int j = 0; j < 40; ++j) {
                for (std::size_t i = 0; i < n; ++i) xt[i] = res.theta[i] + a * d[i];
                const double ft = oracle(xt, gt);
                ++res.oracle_calls;
                if (std::isfinite(ft) && ft <= f + cfg.wolfe_c1 * a * dphi0) {
                    found = true;
                    f_new = ft;
                    break;
                }
                a *= 0.5;
            }
            if (!found) {
                res.line_search_failed = true;
                break;
            }
            S.clear();
            Y.clear();
            rho.clear();
            ls = {true, a, f_new};
            via_fallback = true;
        }

        // strong Wolfe bookkeeping for accepted quasi-Newton steps
        if (!via_fallback) {
            ++res.wolfe_accepted;
            const double dphi_new = dot(gt, d);
            const bool armijo = f_new <= f + cfg.wolfe_c1 * ls.alpha * dphi0 + 1e-12 * std::abs(f);
            const bool curv = std::abs(dphi_new) <= -cfg.wolfe_c2 * dphi0 + 1e-12 * std::abs(dphi0);
            if (!(armijo && curv)) ++res.wolfe_violations;
        }

        // curvature pair
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = xt[i] - res.theta[i];
            y[i] = gt[i] - g[i];
        }
        const double ys = dot(y, s);
        if (ys > 0.0) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / ys);
            gamma = ys / dot(Y.back(), Y.back());
            if (static_cast<int>(S.size()) > cfg.lbfgs_memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        res.theta.assign(xt.begin(), xt.end());
        g.assign(gt.begin(), gt.end());
        f = f_new;
        res.loss = f;
        res.grad_norm = norm2(g);
        res.iterations = it;
        if (trace) trace->push_back({it, f, res.grad_norm});
    }
    return res;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream os(tmp);
        if (!os) throw ConfigError("cannot open " + tmp.string());
        os << "step,loss,grad_norm\n";
        char buf[80];
        for (const auto& r : trace) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.step, r.loss, r.grad_norm);
            os << buf;
        }
    }
    fs::rename(tmp, target);
}

}  // namespace pdeopt
