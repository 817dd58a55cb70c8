#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pdeopt {

// Worker cap: min(omp max threads, PDEOPT_THREADS if set). 1 without OpenMP.
int worker_count();

// Execution mode for the data-parallel kernels. Results are identical in
// both modes: work is split over a fixed chunk grid and partials are
// combined in a fixed order, so thread count never changes the bits.
enum class Exec { serial, parallel };

// Fixed chunk width of the batched kernels.
inline constexpr int kChunk = 64;

inline std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

// Pairwise (binary-tree) sum; order fixed by the input layout.
double pairwise_sum(std::span<const double> x);

// Pairwise reduction of m stacked vectors of length n (row-major) into out.
void pairwise_sum_rows(const double* rows, std::size_t m, std::size_t n, double* out);

}  // namespace pdeopt
