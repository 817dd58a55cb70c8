#include "pdeopt/parallel.hpp"

#include <cstdlib>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pdeopt {

int worker_count() {
    int n = 1;
#ifdef _OPENMP
    n = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("PDEOPT_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

double pairwise_sum(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

void pairwise_sum_rows(const double* rows, std::size_t m, std::size_t n, double* out) {
    if (m == 0) {
        std::memset(out, 0, n * sizeof(double));
        return;
    }
    // iterative binary-tree reduction into a scratch copy; the combination
    // order depends only on m, never on thread count
    static thread_local std::vector<double> scratch;
    scratch.assign(rows, rows + m * n);
    std::size_t width = m;
    while (width > 1) {
        const std::size_t half = width / 2;
        for (std::size_t r = 0; r < half; ++r) {
            double* dst = scratch.data() + r * n;
            const double* src = scratch.data() + (width - 1 - r) * n;
            if (dst == src) continue;
            for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
        }
        width = width - half;
    }
    std::memcpy(out, scratch.data(), n * sizeof(double));
}

}  // namespace pdeopt
