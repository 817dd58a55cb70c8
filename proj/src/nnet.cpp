#include "pdeopt/nnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pdeopt {

// ---------------------------------------------------------------------------
// fast_tanh: exp-based tanh the compiler can vectorize. All operations are
// fixed-order with explicit fma, so scalar and batched paths agree bit for
// bit. Absolute error is a few ulp.

static inline double vexp(double x) {
    // e^x = 2^k * e^r, r in [-ln2/2, ln2/2]. |x| <= ~45 here.
    constexpr double log2e = 1.4426950408889634074;
    constexpr double ln2_hi = 6.93147180369123816490e-01;
    constexpr double ln2_lo = 1.90821492927058770002e-10;
    const double kd = std::nearbyint(x * log2e);
    double r = std::fma(-kd, ln2_hi, x);
    r = std::fma(-kd, ln2_lo, r);
    double p = 1.6059043836821614599e-10;           // 1/13!
    p = std::fma(p, r, 2.0876756987868098979e-09);  // 1/12!
    p = std::fma(p, r, 2.5052108385441718775e-08);  // 1/11!
    p = std::fma(p, r, 2.7557319223985890653e-07);  // 1/10!
    p = std::fma(p, r, 2.7557319223985892511e-06);  // 1/9!
    p = std::fma(p, r, 2.4801587301587301566e-05);  // 1/8!
    p = std::fma(p, r, 1.9841269841269841253e-04);  // 1/7!
    p = std::fma(p, r, 1.3888888888888889419e-03);  // 1/6!
    p = std::fma(p, r, 8.3333333333333332177e-03);  // 1/5!
    p = std::fma(p, r, 4.1666666666666664354e-02);  // 1/4!
    p = std::fma(p, r, 1.6666666666666665741e-01);  // 1/3!
    p = std::fma(p, r, 5.0000000000000000000e-01);  // 1/2!
    p = std::fma(p, r, 1.0);
    p = std::fma(p, r, 1.0);
    const std::int64_t k = static_cast<std::int64_t>(kd);
    const double two_k = std::bit_cast<double>((k + 1023) << 52);
    return p * two_k;
}

double fast_tanh(double x) {
    if (x > 20.0) return 1.0;
    if (x < -20.0) return -1.0;
    const double e = vexp(2.0 * x);
    return (e - 1.0) / (e + 1.0);
}

// ---------------------------------------------------------------------------
// AnsatzSpec

void AnsatzSpec::eval(const double* x, double& g, double* g1, double* g2) const {
    g1[0] = g1[1] = g1[2] = 0.0;
    g2[0] = g2[1] = g2[2] = 0.0;
    switch (mult) {
        case Mult::one:
            g = 1.0;
            break;
        case Mult::hold01_axis0:
            g = x[0] * (x[0] - 1.0);
            g1[0] = 2.0 * x[0] - 1.0;
            g2[0] = 2.0;
            break;
    }
}

std::string AnsatzSpec::id() const {
    switch (mult) {
        case Mult::one: return "one";
        case Mult::hold01_axis0: return "x*(x-1)";
    }
    return "one";
}

AnsatzSpec AnsatzSpec::from_id(const std::string& id, double scale) {
    AnsatzSpec a;
    a.scale = scale;
    if (id == "one")
        a.mult = Mult::one;
    else if (id == "x*(x-1)")
        a.mult = Mult::hold01_axis0;
    else
        throw ConfigError("unknown ansatz id: " + id);
    return a;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ConfigError("network needs at least input and output widths");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        if (widths_[l] < 1 || widths_[l + 1] < 1) throw ConfigError("zero network width");
        w_off_.push_back(total);
        total += std::size_t(widths_[l + 1]) * widths_[l];
        b_off_.push_back(total);
        total += widths_[l + 1];
    }
    data_.assign(total, 0.0);
}

Mlp Mlp::init(std::vector<int> widths, Rng& rng) {
    Mlp m(std::move(widths));
    for (int l = 0; l < m.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.widths_[l]));
        for (double& w : m.weight(l)) w = rng.uniform(-bound, bound);
        for (double& b : m.bias(l)) b = rng.uniform(-bound, bound);
    }
    return m;
}

std::span<const double> Mlp::weight(int l) const {
    return {data_.data() + w_off_[l], std::size_t(widths_[l + 1]) * widths_[l]};
}
std::span<const double> Mlp::bias(int l) const {
    return {data_.data() + b_off_[l], std::size_t(widths_[l + 1])};
}
std::span<double> Mlp::weight(int l) {
    return {data_.data() + w_off_[l], std::size_t(widths_[l + 1]) * widths_[l]};
}
std::span<double> Mlp::bias(int l) {
    return {data_.data() + b_off_[l], std::size_t(widths_[l + 1])};
}

double Mlp::forward(const double* x) const {
    std::vector<double> a(x, x + widths_.front()), z;
    for (int l = 0; l < layer_count(); ++l) {
        const int in = widths_[l], out = widths_[l + 1];
        z.assign(out, 0.0);
        auto W = weight(l);
        auto b = bias(l);
        for (int o = 0; o < out; ++o) {
            double s = b[o];
            for (int i = 0; i < in; ++i) s += W[std::size_t(o) * in + i] * a[i];
            z[o] = (l + 1 < layer_count()) ? fast_tanh(s) : s;
        }
        a.swap(z);
    }
    return a[0];
}

void save_checkpoint(const std::string& path, const Mlp& net, const AnsatzSpec& ansatz,
                     std::uint64_t seed) {
    nlohmann::json j;
    j["widths"] = net.widths();
    j["ansatz"] = ansatz.id();
    j["scale"] = ansatz.scale;
    j["seed"] = seed;
    for (int l = 0; l < net.layer_count(); ++l) {
        j["weights"].push_back(std::vector<double>(net.weight(l).begin(), net.weight(l).end()));
        j["biases"].push_back(std::vector<double>(net.bias(l).begin(), net.bias(l).end()));
    }
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path);
    os << j.dump(2) << '\n';
}

Mlp load_checkpoint(const std::string& path, AnsatzSpec* ansatz_out, std::uint64_t* seed_out) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    nlohmann::json j;
    is >> j;
    Mlp net(j["widths"].get<std::vector<int>>());
    for (int l = 0; l < net.layer_count(); ++l) {
        auto w = j["weights"][l].get<std::vector<double>>();
        auto b = j["biases"][l].get<std::vector<double>>();
        if (w.size() != net.weight(l).size() || b.size() != net.bias(l).size())
            throw ConfigError("checkpoint shape mismatch in " + path);
        std::copy(w.begin(), w.end(), net.weight(l).begin());
        std::copy(b.begin(), b.end(), net.bias(l).begin());
    }
    if (ansatz_out) *ansatz_out = AnsatzSpec::from_id(j["ansatz"], j["scale"]);
    if (seed_out) *seed_out = j["seed"].get<std::uint64_t>();
    return net;
}

// ---------------------------------------------------------------------------
// JetBatch

void JetBatch::resize(int n_, int dim_, JetDepth d) {
    n = n_;
    dim = dim_;
    depth = d;
    value.assign(n, 0.0);
    const int nd = (d >= JetDepth::first) ? dim : 0;
    const int nd2 = (d >= JetDepth::second) ? dim : 0;
    grad.assign(std::size_t(nd) * n, 0.0);
    diag2.assign(std::size_t(nd2) * n, 0.0);
}

void JetBatch::clear() {
    std::fill(value.begin(), value.end(), 0.0);
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(diag2.begin(), diag2.end(), 0.0);
}

JetValue JetBatch::get(int i) const {
    JetValue j;
    j.value = value[i];
    if (depth >= JetDepth::first)
        for (int a = 0; a < dim; ++a) j.grad[a] = g(a, i);
    if (depth >= JetDepth::second)
        for (int a = 0; a < dim; ++a) j.diag2[a] = d2(a, i);
    return j;
}

// ---------------------------------------------------------------------------
// Scalar reference jet. Kept deliberately simple; the batched kernel is
// validated against it.

JetValue eval_jet(const Mlp& net, const AnsatzSpec& ansatz, const Point& x, int dim) {
    if (net.input_dim() != dim) throw ConfigError("eval_jet: input dimension mismatch");
    if (net.output_dim() != 1) throw ConfigError("eval_jet: scalar output networks only");
    const int L = net.layer_count();
    const int nv = 1 + 2 * dim;  // value, first, second rows
    std::vector<std::vector<double>> a(nv), z(nv);
    a[0].assign(x.begin(), x.begin() + dim);
    for (int v = 1; v <= dim; ++v) {
        a[v].assign(dim, 0.0);
        a[v][v - 1] = 1.0;
        a[v + dim].assign(dim, 0.0);
    }
    for (int l = 0; l < L; ++l) {
        const int in = net.widths()[l], out = net.widths()[l + 1];
        auto W = net.weight(l);
        auto b = net.bias(l);
        for (int v = 0; v < nv; ++v) {
            z[v].assign(out, 0.0);
            for (int o = 0; o < out; ++o) {
                double s = (v == 0) ? b[o] : 0.0;
                for (int i = 0; i < in; ++i) s += W[std::size_t(o) * in + i] * a[v][i];
                z[v][o] = s;
            }
        }
        if (l + 1 < L) {
            for (int v = 0; v < nv; ++v) a[v].assign(out, 0.0);
            for (int o = 0; o < out; ++o) {
                const double t = fast_tanh(z[0][o]);
                const double u = 1.0 - t * t;
                a[0][o] = t;
                for (int d = 0; d < dim; ++d) {
                    const double zd = z[1 + d][o];
                    a[1 + d][o] = u * zd;
                    a[1 + dim + d][o] = u * z[1 + dim + d][o] - 2.0 * t * u * zd * zd;
                }
            }
        } else {
            for (int v = 0; v < nv; ++v) a[v] = z[v];
        }
    }
    double g, g1[kMaxDim], g2[kMaxDim];
    ansatz.eval(x.data(), g, g1, g2);
    const double s = ansatz.scale;
    JetValue out;
    const double N = a[0][0];
    out.value = s * g * N;
    for (int d = 0; d < dim; ++d) {
        const double Nd = a[1 + d][0], Ndd = a[1 + dim + d][0];
        out.grad[d] = s * (g1[d] * N + g * Nd);
        out.diag2[d] = s * (g2[d] * N + 2.0 * g1[d] * Nd + g * Ndd);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batched evaluator

struct JetEvaluator::Impl {
    const Mlp* net;
    AnsatzSpec ansatz;
    int dim;
    JetDepth depth;
    int nv;  // value + first + second rows propagated (also taped per layer)
    int maxw;
    const PointBatch* pts = nullptr;

    // tape[l] slab layout per chunk: [nv][maxw][kChunk] holding
    // (tanh values T, pre-activation first jets z_d, second jets z_dd).
    std::vector<std::vector<double>> tape;

    struct Scratch {
        std::vector<double> A, Z;
    };
    std::vector<Scratch> scratch;
    std::vector<double> chunk_grads;

    Impl(const Mlp& n, AnsatzSpec a, int d, JetDepth dep) : net(&n), ansatz(a), dim(d), depth(dep) {
        if (n.input_dim() != d) throw ConfigError("JetEvaluator: input dimension mismatch");
        if (n.output_dim() != 1) throw ConfigError("JetEvaluator: scalar output networks only");
        const int nd = (depth >= JetDepth::first) ? dim : 0;
        const int nd2 = (depth >= JetDepth::second) ? dim : 0;
        nv = 1 + nd + nd2;
        maxw = *std::max_element(n.widths().begin(), n.widths().end());
        tape.resize(std::max(0, n.layer_count() - 1));
        int nthreads = 1;
#ifdef _OPENMP
        nthreads = omp_get_max_threads();
#endif
        scratch.resize(std::max(1, nthreads));
    }

    std::size_t slab() const { return std::size_t(nv) * maxw * kChunk; }

    Scratch& my_scratch() {
        int t = 0;
#ifdef _OPENMP
        t = omp_get_thread_num();
#endif
        Scratch& s = scratch[std::size_t(t) % scratch.size()];
        const std::size_t need = slab();
        if (s.A.size() < need) {
            s.A.assign(need, 0.0);
            s.Z.assign(need, 0.0);
        }
        return s;
    }

    int nd() const { return (depth >= JetDepth::first) ? dim : 0; }
    int nd2() const { return (depth >= JetDepth::second) ? dim : 0; }

    void load_input(int ck, double* A) const {
        const int n = pts->n;
        const int base = ck * kChunk;
        std::memset(A, 0, slab() * sizeof(double));
        for (int i = 0; i < dim; ++i) {
            double* row = A + std::size_t(i) * kChunk;
            for (int c = 0; c < kChunk; ++c)
                row[c] = (base + c < n) ? pts->coord[std::size_t(i) * n + base + c] : 0.0;
        }
        for (int a = 0; a < nd(); ++a) {
            double* row = A + (std::size_t(1 + a) * maxw + a) * kChunk;
            for (int c = 0; c < kChunk; ++c) row[c] = 1.0;
        }
    }

    // Z[v] = W A[v] (+ b on the value row), rows strided by maxw*kChunk.
    // Register-tiled: 4 output rows x 16 lanes held in accumulators so the
    // A tile is streamed once per 4 outputs instead of once per output.
    void mat_forward(const double* W, const double* b, const double* A, double* Z, int out,
                     int in) const {
        constexpr int CT = 16, OT = 4;
        for (int v = 0; v < nv; ++v) {
            const double* Av = A + std::size_t(v) * maxw * kChunk;
            double* Zv = Z + std::size_t(v) * maxw * kChunk;
            for (int o0 = 0; o0 < out; o0 += OT) {
                const int ob = std::min(OT, out - o0);
                for (int c0 = 0; c0 < kChunk; c0 += CT) {
                    double acc[OT][CT];
                    for (int ot = 0; ot < ob; ++ot) {
                        const double init = (v == 0) ? b[o0 + ot] : 0.0;
                        for (int ct = 0; ct < CT; ++ct) acc[ot][ct] = init;
                    }
                    if (ob == OT) {
                        for (int i = 0; i < in; ++i) {
                            const double* ar = Av + std::size_t(i) * kChunk + c0;
                            const double w0 = W[std::size_t(o0 + 0) * in + i];
                            const double w1 = W[std::size_t(o0 + 1) * in + i];
                            const double w2 = W[std::size_t(o0 + 2) * in + i];
                            const double w3 = W[std::size_t(o0 + 3) * in + i];
#pragma omp simd
                            for (int ct = 0; ct < CT; ++ct) {
                                const double a = ar[ct];
                                acc[0][ct] += w0 * a;
                                acc[1][ct] += w1 * a;
                                acc[2][ct] += w2 * a;
                                acc[3][ct] += w3 * a;
                            }
                        }
                    } else {
                        for (int i = 0; i < in; ++i) {
                            const double* ar = Av + std::size_t(i) * kChunk + c0;
                            for (int ot = 0; ot < ob; ++ot) {
                                const double w = W[std::size_t(o0 + ot) * in + i];
#pragma omp simd
                                for (int ct = 0; ct < CT; ++ct) acc[ot][ct] += w * ar[ct];
                            }
                        }
                    }
                    for (int ot = 0; ot < ob; ++ot)
                        std::memcpy(Zv + std::size_t(o0 + ot) * kChunk + c0, acc[ot],
                                    CT * sizeof(double));
                }
            }
        }
    }

    // Ab[v] = W^T Zb[v], tiled like mat_forward with input rows accumulated.
    void mat_transpose(const double* W, const double* Zb, double* Ab, int out, int in) const {
        constexpr int CT = 16, IT = 4;
        for (int v = 0; v < nv; ++v) {
            const double* Zv = Zb + std::size_t(v) * maxw * kChunk;
            double* Av = Ab + std::size_t(v) * maxw * kChunk;
            for (int i0 = 0; i0 < in; i0 += IT) {
                const int ib = std::min(IT, in - i0);
                for (int c0 = 0; c0 < kChunk; c0 += CT) {
                    double acc[IT][CT] = {};
                    if (ib == IT) {
                        for (int o = 0; o < out; ++o) {
                            const double* zr = Zv + std::size_t(o) * kChunk + c0;
                            const double* wr = W + std::size_t(o) * in + i0;
                            const double w0 = wr[0], w1 = wr[1], w2 = wr[2], w3 = wr[3];
#pragma omp simd
                            for (int ct = 0; ct < CT; ++ct) {
                                const double z = zr[ct];
                                acc[0][ct] += w0 * z;
                                acc[1][ct] += w1 * z;
                                acc[2][ct] += w2 * z;
                                acc[3][ct] += w3 * z;
                            }
                        }
                    } else {
                        for (int o = 0; o < out; ++o) {
                            const double* zr = Zv + std::size_t(o) * kChunk + c0;
                            for (int it = 0; it < ib; ++it) {
                                const double w = W[std::size_t(o) * in + i0 + it];
#pragma omp simd
                                for (int ct = 0; ct < CT; ++ct) acc[it][ct] += w * zr[ct];
                            }
                        }
                    }
                    for (int it = 0; it < ib; ++it)
                        std::memcpy(Av + std::size_t(i0 + it) * kChunk + c0, acc[it],
                                    CT * sizeof(double));
                }
            }
        }
    }

    // Wb[o][i] += sum_v dot(Zb[v][o], A[v][i]);  bb[o] += rowsum(Zb[0][o]).
    // 4x2 output tiles with 8-lane vector accumulators.
    void mat_param_grad(const double* Zb, const double* A, double* Wb, double* bb, int out,
                        int in) const {
        constexpr int OT = 4, IT = 2, VL = 8;
        for (int o0 = 0; o0 < out; o0 += OT) {
            const int ob = std::min(OT, out - o0);
            for (int i0 = 0; i0 < in; i0 += IT) {
                const int ib = std::min(IT, in - i0);
                double vacc[OT][IT][VL] = {};
                for (int v = 0; v < nv; ++v) {
                    const double* Zv = Zb + std::size_t(v) * maxw * kChunk;
                    const double* Av = A + std::size_t(v) * maxw * kChunk;
                    for (int c0 = 0; c0 < kChunk; c0 += VL) {
                        for (int ot = 0; ot < ob; ++ot) {
                            const double* zr = Zv + std::size_t(o0 + ot) * kChunk + c0;
                            for (int it = 0; it < ib; ++it) {
                                const double* ar = Av + std::size_t(i0 + it) * kChunk + c0;
#pragma omp simd
                                for (int l = 0; l < VL; ++l) vacc[ot][it][l] += zr[l] * ar[l];
                            }
                        }
                    }
                }
                for (int ot = 0; ot < ob; ++ot)
                    for (int it = 0; it < ib; ++it) {
                        double s = 0.0;
                        for (int l = 0; l < VL; ++l) s += vacc[ot][it][l];
                        Wb[std::size_t(o0 + ot) * in + i0 + it] += s;
                    }
            }
        }
        for (int o = 0; o < out; ++o) {
            const double* zr = Zb + std::size_t(o) * kChunk;
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (int c = 0; c < kChunk; ++c) s += zr[c];
            bb[o] += s;
        }
    }

    // A := activation jets recomputed from a tape slab (T, z_d, z_dd).
    void activation_jets(const double* slabp, double* A, int outw) const {
        for (int o = 0; o < outw; ++o) {
            const double* T = slabp + std::size_t(o) * kChunk;
            std::memcpy(A + std::size_t(o) * kChunk, T, kChunk * sizeof(double));
            for (int a = 0; a < nd(); ++a) {
                const double* zd = slabp + (std::size_t(1 + a) * maxw + o) * kChunk;
                double* ad = A + (std::size_t(1 + a) * maxw + o) * kChunk;
#pragma omp simd
                for (int c = 0; c < kChunk; ++c) {
                    const double u = 1.0 - T[c] * T[c];
                    ad[c] = u * zd[c];
                }
                if (nd2()) {
                    const double* zdd = slabp + (std::size_t(1 + dim + a) * maxw + o) * kChunk;
                    double* add = A + (std::size_t(1 + dim + a) * maxw + o) * kChunk;
#pragma omp simd
                    for (int c = 0; c < kChunk; ++c) {
                        const double u = 1.0 - T[c] * T[c];
                        add[c] = u * zdd[c] - 2.0 * T[c] * u * zd[c] * zd[c];
                    }
                }
            }
        }
    }

    void forward_chunk(int ck, JetBatch& out) {
        Scratch& s = my_scratch();
        double* A = s.A.data();
        double* Z = s.Z.data();
        load_input(ck, A);
        const int L = net->layer_count();
        const int n = pts->n;
        const int base = ck * kChunk;
        for (int l = 0; l < L; ++l) {
            const int in = net->widths()[l], outw = net->widths()[l + 1];
            mat_forward(net->weight(l).data(), net->bias(l).data(), A, Z, outw, in);
            if (l + 1 < L) {
                double* slabp = tape[l].data() + std::size_t(ck) * slab();
                for (int o = 0; o < outw; ++o) {
                    const double* zr = Z + std::size_t(o) * kChunk;
                    double* T = slabp + std::size_t(o) * kChunk;
#pragma omp simd
                    for (int c = 0; c < kChunk; ++c) T[c] = fast_tanh(zr[c]);
                }
                for (int v = 1; v < nv; ++v)
                    std::memcpy(slabp + std::size_t(v) * maxw * kChunk,
                                Z + std::size_t(v) * maxw * kChunk,
                                std::size_t(outw) * kChunk * sizeof(double));
                activation_jets(slabp, A, outw);
            } else {
                const double sc = ansatz.scale;
                for (int c = 0; c < kChunk; ++c) {
                    const int i = base + c;
                    if (i >= n) break;
                    double x[kMaxDim] = {0, 0, 0};
                    for (int a = 0; a < dim; ++a) x[a] = pts->coord[std::size_t(a) * n + i];
                    double g, g1[kMaxDim], g2[kMaxDim];
                    ansatz.eval(x, g, g1, g2);
                    const double N = Z[c];
                    out.value[i] = sc * g * N;
                    for (int a = 0; a < nd(); ++a) {
                        const double Na = Z[std::size_t(1 + a) * maxw * kChunk + c];
                        out.g(a, i) = sc * (g1[a] * N + g * Na);
                        if (nd2()) {
                            const double Naa = Z[std::size_t(1 + dim + a) * maxw * kChunk + c];
                            out.d2(a, i) = sc * (g2[a] * N + 2.0 * g1[a] * Na + g * Naa);
                        }
                    }
                }
            }
        }
    }

    void backward_chunk(int ck, const JetBatch& seeds, double* gout) {
        Scratch& s = my_scratch();
        double* Zb = s.Z.data();
        double* Ab = s.A.data();
        std::memset(Zb, 0, slab() * sizeof(double));
        const int n = pts->n;
        const int base = ck * kChunk;
        // adjoint seeds on yhat -> seeds on the raw network output N
        for (int c = 0; c < kChunk; ++c) {
            const int i = base + c;
            if (i >= n) break;
            double x[kMaxDim] = {0, 0, 0};
            for (int a = 0; a < dim; ++a) x[a] = pts->coord[std::size_t(a) * n + i];
            double g, g1[kMaxDim], g2[kMaxDim];
            ansatz.eval(x, g, g1, g2);
            const double sc = ansatz.scale;
            double acc = g * seeds.value[i];
            for (int a = 0; a < nd(); ++a) {
                const double wa = seeds.g(a, i);
                const double w2 = nd2() ? seeds.d2(a, i) : 0.0;
                acc += g1[a] * wa + g2[a] * w2;
                Zb[std::size_t(1 + a) * maxw * kChunk + c] = sc * (g * wa + 2.0 * g1[a] * w2);
                if (nd2()) Zb[std::size_t(1 + dim + a) * maxw * kChunk + c] = sc * g * w2;
            }
            Zb[c] = sc * acc;
        }
        const int L = net->layer_count();
        for (int l = L - 1; l >= 0; --l) {
            const int in = net->widths()[l], outw = net->widths()[l + 1];
            if (l == 0) {
                load_input(ck, Ab);
            } else {
                activation_jets(tape[l - 1].data() + std::size_t(ck) * slab(), Ab, in);
            }
            mat_param_grad(Zb, Ab, gout + weight_offset(l), gout + bias_offset(l), outw, in);
            if (l == 0) break;
            mat_transpose(net->weight(l).data(), Zb, Ab, outw, in);
            // tanh reverse through layer l-1 using its tape
            const double* slabp = tape[l - 1].data() + std::size_t(ck) * slab();
            for (int o = 0; o < in; ++o) {
                const double* T = slabp + std::size_t(o) * kChunk;
                double* z0 = Zb + std::size_t(o) * kChunk;
                const double* a0 = Ab + std::size_t(o) * kChunk;
#pragma omp simd
                for (int c = 0; c < kChunk; ++c) {
                    const double u = 1.0 - T[c] * T[c];
                    z0[c] = u * a0[c];
                }
                for (int a = 0; a < nd(); ++a) {
                    const double* zd = slabp + (std::size_t(1 + a) * maxw + o) * kChunk;
                    const double* ad = Ab + (std::size_t(1 + a) * maxw + o) * kChunk;
                    double* zbd = Zb + (std::size_t(1 + a) * maxw + o) * kChunk;
                    if (nd2()) {
                        const double* zdd = slabp + (std::size_t(1 + dim + a) * maxw + o) * kChunk;
                        const double* add = Ab + (std::size_t(1 + dim + a) * maxw + o) * kChunk;
                        double* zbdd = Zb + (std::size_t(1 + dim + a) * maxw + o) * kChunk;
#pragma omp simd
                        for (int c = 0; c < kChunk; ++c) {
                            const double t = T[c];
                            const double u = 1.0 - t * t;
                            z0[c] += (-2.0 * t * u * zd[c]) * ad[c] +
                                     (-2.0 * t * u * zdd[c] -
                                      2.0 * u * (u - 2.0 * t * t) * zd[c] * zd[c]) *
                                         add[c];
                            zbd[c] = u * ad[c] + (-4.0 * t * u * zd[c]) * add[c];
                            zbdd[c] = u * add[c];
                        }
                    } else {
#pragma omp simd
                        for (int c = 0; c < kChunk; ++c) {
                            const double t = T[c];
                            const double u = 1.0 - t * t;
                            z0[c] += (-2.0 * t * u * zd[c]) * ad[c];
                            zbd[c] = u * ad[c];
                        }
                    }
                }
            }
        }
    }

    std::size_t weight_offset(int l) const {
        std::size_t off = 0;
        for (int k = 0; k < l; ++k)
            off += std::size_t(net->widths()[k + 1]) * net->widths()[k] + net->widths()[k + 1];
        return off;
    }
    std::size_t bias_offset(int l) const {
        return weight_offset(l) + std::size_t(net->widths()[l + 1]) * net->widths()[l];
    }
};

JetEvaluator::JetEvaluator(const Mlp& net, AnsatzSpec ansatz, int dim, JetDepth depth)
    : impl_(std::make_unique<Impl>(net, ansatz, dim, depth)) {}
JetEvaluator::~JetEvaluator() = default;
JetEvaluator::JetEvaluator(JetEvaluator&&) noexcept = default;
JetEvaluator& JetEvaluator::operator=(JetEvaluator&&) noexcept = default;

const Mlp& JetEvaluator::net() const { return *impl_->net; }

void JetEvaluator::forward(const PointBatch& pts, JetBatch& out, Exec exec) {
    Impl& im = *impl_;
    if (pts.dim != im.dim) throw ConfigError("JetEvaluator::forward: dimension mismatch");
    im.pts = &pts;
    const int ncks = static_cast<int>(chunk_count(pts.n));
    for (auto& t : im.tape) t.resize(std::size_t(ncks) * im.slab());
    out.resize(pts.n, im.dim, im.depth);
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (int ck = 0; ck < ncks; ++ck) im.forward_chunk(ck, out);
    } else {
        for (int ck = 0; ck < ncks; ++ck) im.forward_chunk(ck, out);
    }
}

void JetEvaluator::backward(const JetBatch& seeds, std::span<double> grad_out, Exec exec) {
    Impl& im = *impl_;
    if (!im.pts) throw ConfigError("JetEvaluator::backward before forward");
    const std::size_t P = im.net->param_count();
    if (grad_out.size() != P) throw ConfigError("JetEvaluator::backward: gradient size mismatch");
    const int ncks = static_cast<int>(chunk_count(im.pts->n));
    im.chunk_grads.assign(std::size_t(ncks) * P, 0.0);
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (int ck = 0; ck < ncks; ++ck)
            im.backward_chunk(ck, seeds, im.chunk_grads.data() + std::size_t(ck) * P);
    } else {
        for (int ck = 0; ck < ncks; ++ck)
            im.backward_chunk(ck, seeds, im.chunk_grads.data() + std::size_t(ck) * P);
    }
    std::vector<double> total(P);
    pairwise_sum_rows(im.chunk_grads.data(), ncks, P, total.data());
    for (std::size_t i = 0; i < P; ++i) grad_out[i] += total[i];
}

// ---------------------------------------------------------------------------
// CompositeLoss

std::size_t CompositeLoss::param_count() const {
    std::size_t p = 0;
    for (const auto& e : nets) p += e.net->param_count();
    return p;
}

void CompositeLoss::get_params(std::span<double> theta) const {
    std::size_t off = 0;
    for (const auto& e : nets) {
        std::copy(e.net->params().begin(), e.net->params().end(), theta.begin() + off);
        off += e.net->param_count();
    }
}

void CompositeLoss::set_params(std::span<const double> theta) {
    std::size_t off = 0;
    for (auto& e : nets) {
        std::copy(theta.begin() + off, theta.begin() + off + e.net->param_count(),
                  e.net->params().begin());
        off += e.net->param_count();
    }
}

JetBatch CompositeLoss::eval_net(int net_index, const PointBatch& pts, JetDepth depth) const {
    const auto& e = nets[net_index];
    JetEvaluator ev(*e.net, e.ansatz, pts.dim, depth);
    JetBatch out;
    ev.forward(pts, out, exec);
    return out;
}

struct CompositeLossCache {
    struct GroupCache {
        std::vector<std::unique_ptr<JetEvaluator>> evals;
        std::vector<JetBatch> jets, seeds;
        std::vector<double> chunk_loss;
    };
    std::vector<GroupCache> groups;
};

double CompositeLoss::value_and_grad(std::span<const double> theta, std::span<double> grad) {
    set_params(theta);
    std::fill(grad.begin(), grad.end(), 0.0);
    const int nnets = static_cast<int>(nets.size());
    std::vector<std::size_t> offsets(nnets + 1, 0);
    for (int j = 0; j < nnets; ++j) offsets[j + 1] = offsets[j] + nets[j].net->param_count();

    if (!cache_) cache_ = std::make_shared<CompositeLossCache>();
    if (cache_->groups.size() != groups.size()) {
        cache_->groups.clear();
        cache_->groups.resize(groups.size());
    }

    double loss = 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        LossGroup& g = groups[gi];
        CompositeLossCache::GroupCache& gc = cache_->groups[gi];
        if (g.pts.n == 0) throw ConfigError("empty sample set in loss group '" + g.label + "'");
        if (gc.evals.empty()) {
            gc.evals.resize(nnets);
            gc.jets.resize(nnets);
            gc.seeds.resize(nnets);
            for (int j = 0; j < nnets; ++j)
                if (g.used[j])
                    gc.evals[j] = std::make_unique<JetEvaluator>(*nets[j].net, nets[j].ansatz,
                                                                 g.pts.dim, g.depth[j]);
        }
        for (int j = 0; j < nnets; ++j)
            if (g.used[j]) gc.evals[j]->forward(g.pts, gc.jets[j], exec);

        const int n = g.pts.n;
        const int ncks = static_cast<int>(chunk_count(n));
        for (int j = 0; j < nnets; ++j)
            if (g.used[j]) gc.seeds[j].resize(n, g.pts.dim, g.depth[j]);
        gc.chunk_loss.assign(ncks, 0.0);

        auto run_chunk = [&](int ck) {
            const int lo = ck * kChunk;
            const int hi = std::min(n, lo + kChunk);
            std::array<JetValue, 8> jv{}, sv{};
            double acc = 0.0;
            for (int i = lo; i < hi; ++i) {
                for (int j = 0; j < nnets; ++j) jv[j] = g.used[j] ? gc.jets[j].get(i) : JetValue{};
                for (const LossBlock& b : g.blocks) {
                    for (int j = 0; j < nnets; ++j) sv[j] = JetValue{};
                    const double phi =
                        b.term(i, std::span<const JetValue>(jv.data(), nnets),
                               std::span<JetValue>(sv.data(), nnets));
                    acc += b.weight * phi;
                    for (int j = 0; j < nnets; ++j) {
                        if (!g.used[j]) continue;
                        JetBatch& sj = gc.seeds[j];
                        sj.value[i] += b.weight * sv[j].value;
                        if (sj.depth >= JetDepth::first)
                            for (int a = 0; a < sj.dim; ++a) sj.g(a, i) += b.weight * sv[j].grad[a];
                        if (sj.depth >= JetDepth::second)
                            for (int a = 0; a < sj.dim; ++a)
                                sj.d2(a, i) += b.weight * sv[j].diag2[a];
                    }
                }
            }
            gc.chunk_loss[ck] = acc;
        };
        if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
            for (int ck = 0; ck < ncks; ++ck) run_chunk(ck);
        } else {
            for (int ck = 0; ck < ncks; ++ck) run_chunk(ck);
        }
        const double gl = pairwise_sum(gc.chunk_loss);
        if (!std::isfinite(gl))
            throw NumericalError("non-finite loss contribution from group '" + g.label + "'");
        loss += gl;
        for (int j = 0; j < nnets; ++j) {
            if (!g.used[j]) continue;
            gc.evals[j]->backward(gc.seeds[j], grad.subspan(offsets[j], nets[j].net->param_count()),
                                  exec);
        }
    }
    if (param_l2 > 0.0) {
        double s = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            s += theta[i] * theta[i];
            grad[i] += param_l2 * theta[i];
        }
        loss += 0.5 * param_l2 * s;
    }
    if (!std::isfinite(loss)) throw NumericalError("non-finite training loss");
    return loss;
}

}  // namespace pdeopt
