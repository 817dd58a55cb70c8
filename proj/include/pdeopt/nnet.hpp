#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pdeopt/errors.hpp"
#include "pdeopt/field.hpp"
#include "pdeopt/parallel.hpp"
#include "pdeopt/rng.hpp"

namespace pdeopt {

// Network output with first and pure second partials at one point.
// Mixed partials are not carried: no residual in this project needs them.
struct JetValue {
    double value = 0.0;
    std::array<double, kMaxDim> grad{0, 0, 0};
    std::array<double, kMaxDim> diag2{0, 0, 0};
};

// Hard-constraint wrapper: yhat(x) = scale * g(x) * N(x) + h(x).
// g carries analytic first/second partials; h is zero for every preset.
struct AnsatzSpec {
    enum class Mult {
        one,          // g(x) = 1
        hold01_axis0  // g(x) = x0*(x0-1): pins yhat to 0 at x0=0 and x0=1
    };
    Mult mult = Mult::one;
    double scale = 1.0;

    void eval(const double* x, double& g, double* g1, double* g2) const;
    std::string id() const;
    static AnsatzSpec from_id(const std::string& id, double scale);
};

// Fully-connected network, tanh hidden activations, linear output.
// Parameters are stored flat: per layer, W row-major [out][in], then b[out].
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> widths);

    // Weights and biases uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    static Mlp init(std::vector<int> widths, Rng& rng);

    const std::vector<int>& widths() const { return widths_; }
    int layer_count() const { return static_cast<int>(widths_.size()) - 1; }
    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    std::size_t param_count() const { return data_.size(); }
    std::span<double> params() { return data_; }
    std::span<const double> params() const { return data_; }

    std::span<const double> weight(int layer) const;
    std::span<const double> bias(int layer) const;
    std::span<double> weight(int layer);
    std::span<double> bias(int layer);

    // Plain scalar forward pass (no derivatives, no ansatz).
    double forward(const double* x) const;

private:
    std::vector<int> widths_;
    std::vector<std::size_t> w_off_, b_off_;
    std::vector<double> data_;
};

// JSON checkpoint: widths, row-major weights, biases, ansatz id, seed.
void save_checkpoint(const std::string& path, const Mlp& net, const AnsatzSpec& ansatz,
                     std::uint64_t seed);
Mlp load_checkpoint(const std::string& path, AnsatzSpec* ansatz_out = nullptr,
                    std::uint64_t* seed_out = nullptr);

// How much of the jet a consumer needs.
enum class JetDepth { value = 0, first = 1, second = 2 };

// Structure-of-arrays point set; coord[a*n + i] is axis a of point i.
struct PointBatch {
    int n = 0;
    int dim = 0;
    std::vector<double> coord;

    PointBatch() = default;
    PointBatch(int n_, int dim_) : n(n_), dim(dim_), coord(std::size_t(n_) * dim_, 0.0) {}
    double at(int axis, int i) const { return coord[std::size_t(axis) * n + i]; }
    double& at(int axis, int i) { return coord[std::size_t(axis) * n + i]; }
    Point point(int i) const {
        Point p{0, 0, 0};
        for (int a = 0; a < dim; ++a) p[a] = at(a, i);
        return p;
    }
};

// Structure-of-arrays jets over a point set.
struct JetBatch {
    int n = 0;
    int dim = 0;
    JetDepth depth = JetDepth::second;
    std::vector<double> value;  // [n]
    std::vector<double> grad;   // [dim][n]
    std::vector<double> diag2;  // [dim][n]

    void resize(int n_, int dim_, JetDepth d);
    void clear();
    JetValue get(int i) const;
    double g(int axis, int i) const { return grad[std::size_t(axis) * n + i]; }
    double d2(int axis, int i) const { return diag2[std::size_t(axis) * n + i]; }
    double& g(int axis, int i) { return grad[std::size_t(axis) * n + i]; }
    double& d2(int axis, int i) { return diag2[std::size_t(axis) * n + i]; }
};

// Scalar reference path: exact jet of yhat = scale*g*N + h at one point.
JetValue eval_jet(const Mlp& net, const AnsatzSpec& ansatz, const Point& x, int dim);

// Batched jet evaluation with a tape for reverse accumulation. forward()
// fills `out` and records the tape; backward() takes adjoint seeds of the
// ansatz output (same SoA shape as the JetBatch) and adds the parameter
// gradient into grad_out, chunk partials combined in a fixed order so the
// result is independent of thread count.
class JetEvaluator {
public:
    JetEvaluator(const Mlp& net, AnsatzSpec ansatz, int dim, JetDepth depth);
    ~JetEvaluator();
    JetEvaluator(JetEvaluator&&) noexcept;
    JetEvaluator& operator=(JetEvaluator&&) noexcept;

    void forward(const PointBatch& pts, JetBatch& out, Exec exec);
    void backward(const JetBatch& seeds, std::span<double> grad_out, Exec exec);

    const Mlp& net() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// One additive term of a training loss: a weight and a per-point functional.
// The functional returns the point's contribution phi and writes
// d(phi)/d(jet components) into `seeds` (one JetValue slot per net of the
// owning CompositeLoss; only participating nets' slots may be touched).
using PointTermFn =
    std::function<double(int point, std::span<const JetValue> jets, std::span<JetValue> seeds)>;

struct LossBlock {
    double weight = 1.0;  // multiplies the sum of phi over the group's points
    PointTermFn term;
    std::string label;
};

// Points shared by one or more blocks, plus the jet depth each net needs
// there (JetDepth::value with used=false for nets a group never reads).
struct LossGroup {
    PointBatch pts;
    std::vector<bool> used;        // per net
    std::vector<JetDepth> depth;   // per net
    std::vector<LossBlock> blocks;
    std::string label;
};

struct CompositeLossCache;

// A differentiable scalar loss over several networks: sum over groups of
// sum over blocks of weight * sum_points phi, plus optional Tikhonov term
// 0.5*param_l2*||theta||^2. Evaluation is deterministic for any Exec mode
// and worker count.
class CompositeLoss {
public:
    struct NetEntry {
        Mlp* net;
        AnsatzSpec ansatz;
        std::string name;
    };

    std::vector<NetEntry> nets;
    std::vector<LossGroup> groups;
    double param_l2 = 0.0;
    Exec exec = Exec::parallel;

    std::size_t param_count() const;
    void get_params(std::span<double> theta) const;
    void set_params(std::span<const double> theta);

    // Returns the loss and writes the full parameter gradient. Throws
    // NumericalError naming the offending group when any contribution is
    // non-finite.
    double value_and_grad(std::span<const double> theta, std::span<double> grad);

    // Jets of one net over one group's points (after set_params), for
    // callers that need fields on a lattice.
    JetBatch eval_net(int net_index, const PointBatch& pts, JetDepth depth) const;

private:
    std::shared_ptr<CompositeLossCache> cache_;  // evaluators and buffers reused across calls
};

// Elementwise tanh, vectorizable, |err| <= a few ulp; shared by the scalar
// and batched paths so both produce identical bits.
double fast_tanh(double x);

}  // namespace pdeopt
