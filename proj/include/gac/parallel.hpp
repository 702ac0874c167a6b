#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

// Deterministic parallel helpers.
//
// All parallelism in the toolkit follows one discipline: work items write to
// preallocated per-item slots, and any reduction runs over the slots in index
// order on the calling thread. Output is therefore byte-identical for any
// thread count, including 1.

namespace gac {

/// Effective thread count: `requested` if > 0, else the GAC_THREADS
/// environment variable if set and positive, else hardware concurrency.
int resolve_threads(int requested);

/// Run body(i) for i in [0, n) on `threads` threads. Items are assigned
/// round-robin by index; the assignment never affects results because each
/// item may touch only its own slot.
void parallel_for_index(std::int64_t n, int threads,
                        const std::function<void(std::int64_t)>& body);

/// Mean and (population) variance of f(i) over i in [0, n), accumulated in
/// fixed chunks of `chunk` items. Chunk partial sums are computed in
/// parallel, then folded in chunk order, so the result does not depend on
/// the thread count.
struct MeanVar {
  double mean = 0.0;
  double var = 0.0;
  std::int64_t n = 0;
};

inline constexpr std::int64_t kReductionChunk = 4096;

template <typename F>
MeanVar chunked_mean_var(std::int64_t n, int threads, F&& f) {
  const std::int64_t nchunks = (n + kReductionChunk - 1) / kReductionChunk;
  std::vector<double> sums(std::size_t(nchunks), 0.0);
  std::vector<double> sqsums(std::size_t(nchunks), 0.0);
  parallel_for_index(nchunks, threads, [&](std::int64_t c) {
    const std::int64_t lo = c * kReductionChunk;
    const std::int64_t hi = std::min(n, lo + kReductionChunk);
    double s = 0.0, s2 = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) {
      const double v = f(i);
      s += v;
      s2 += v * v;
    }
    sums[std::size_t(c)] = s;
    sqsums[std::size_t(c)] = s2;
  });
  double s = 0.0, s2 = 0.0;
  for (std::int64_t c = 0; c < nchunks; ++c) {
    s += sums[std::size_t(c)];
    s2 += sqsums[std::size_t(c)];
  }
  MeanVar out;
  out.n = n;
  out.mean = s / double(n);
  out.var = s2 / double(n) - out.mean * out.mean;
  if (out.var < 0.0) out.var = 0.0;
  return out;
}

} // namespace gac
