// Benchmark of the jet-evaluation kernels: per-point scalar reference vs the
// chunked batch kernel, serial and OpenMP. Prints effective GFLOP/s for the
// forward+reverse pass of representative workloads.

#include <chrono>
#include <cstdio>
#include <vector>

#include "pdeopt/nnet.hpp"
#include "pdeopt/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace pdeopt;

namespace {

double now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// 2 flops per multiply-add, forward ~ nv matmuls, reverse ~ 2x forward
double flops_per_eval(const Mlp& net, int dim, int n) {
    double weights = 0;
    for (int l = 0; l < net.layer_count(); ++l)
        weights += double(net.widths()[l]) * net.widths()[l + 1];
    const int nv = 1 + 2 * dim;
    return 3.0 * nv * weights * 2.0 * n;
}

void bench_batch(const char* label, const Mlp& net, int dim, int n, Exec exec, int reps) {
    AnsatzSpec one;
    JetEvaluator ev(net, one, dim, JetDepth::second);
    Rng rng(7);
    PointBatch pts(n, dim);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < dim; ++a) pts.at(a, i) = rng.uniform();
    JetBatch out, seeds;
    std::vector<double> grad(net.param_count());
    ev.forward(pts, out, exec);  // warm up buffers
    seeds.resize(n, dim, JetDepth::second);
    for (int i = 0; i < n; ++i) {
        seeds.value[i] = 1.0;
        for (int a = 0; a < dim; ++a) {
            seeds.g(a, i) = 0.5;
            seeds.d2(a, i) = 0.25;
        }
    }
    const double t0 = now();
    for (int r = 0; r < reps; ++r) {
        ev.forward(pts, out, exec);
        std::fill(grad.begin(), grad.end(), 0.0);
        ev.backward(seeds, grad, exec);
    }
    const double dt = (now() - t0) / reps;
    std::printf("%-34s n=%5d  %8.3f ms/eval  %7.2f GFLOP/s\n", label, n, dt * 1e3,
                flops_per_eval(net, dim, n) / dt * 1e-9);
}

void bench_scalar(const char* label, const Mlp& net, int dim, int n, int reps) {
    AnsatzSpec one;
    Rng rng(7);
    std::vector<Point> pts(n);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < dim; ++a) pts[i][a] = rng.uniform();
    volatile double sink = 0;
    const double t0 = now();
    for (int r = 0; r < reps; ++r)
        for (int i = 0; i < n; ++i) sink += eval_jet(net, one, pts[i], dim).value;
    const double dt = (now() - t0) / reps;
    // scalar path does the forward only; report against forward flops (1/3)
    std::printf("%-34s n=%5d  %8.3f ms/eval  %7.2f GFLOP/s\n", label, n, dt * 1e3,
                flops_per_eval(net, dim, n) / 3.0 / dt * 1e-9);
    (void)sink;
}

}  // namespace

int main() {
#ifdef _OPENMP
    omp_set_num_threads(worker_count());
    std::printf("workers: %d\n", worker_count());
#endif
    Rng rng(1);
    Mlp net1 = Mlp::init({1, 50, 50, 50, 50, 1}, rng);
    Mlp net3 = Mlp::init({3, 32, 32, 32, 1}, rng);

    std::printf("-- 1D net 4x50 (potential/Burgers workloads) --\n");
    bench_scalar("scalar reference forward", net1, 1, 101, 50);
    bench_batch("batch fwd+bwd serial", net1, 1, 101, Exec::serial, 200);
    bench_batch("batch fwd+bwd openmp", net1, 1, 101, Exec::parallel, 200);

    std::printf("-- 3D net 3x32 (parabolic workload) --\n");
    bench_scalar("scalar reference forward", net3, 3, 4096, 3);
    bench_batch("batch fwd+bwd serial", net3, 3, 4096, Exec::serial, 20);
    bench_batch("batch fwd+bwd openmp", net3, 3, 4096, Exec::parallel, 20);
    return 0;
}
