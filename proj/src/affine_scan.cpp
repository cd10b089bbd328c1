#include <algorithm>
#include <thread>

#include "mambamil/errors.hpp"
#include "mambamil/ssm.hpp"

namespace mambamil {

namespace {

// Runs fn(chunk_begin, chunk_end) over [0, n_chunks) split into contiguous
// groups, one per worker.
template <typename Fn>
void for_each_chunk_group(std::size_t n_chunks, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n_chunks));
  if (workers == 1) {
    fn(std::size_t{0}, n_chunks);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t per = (n_chunks + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * per;
    const std::size_t hi = std::min(n_chunks, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
}

}  // namespace

std::vector<double> affine_scan(std::span<const double> a, std::span<const double> b, ScanMode mode,
                                const ScanOptions& options) {
  if (a.size() != b.size()) {
    throw DimensionError("affine_scan: decay length " + std::to_string(a.size()) + " vs drive length " +
                         std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  std::vector<double> h(n);
  if (mode == ScanMode::kSequential || n == 0) {
    double state = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      state = a[t] * state + b[t];
      h[t] = state;
    }
    return h;
  }

  const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  // Running decay product inside each chunk; the last entry of a chunk is its summary decay.
  std::vector<double> decay(n);

  for_each_chunk_group(n_chunks, options.workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const std::size_t begin = c * chunk, end = std::min(n, begin + chunk);
      double state = 0.0, prod = 1.0;
      for (std::size_t t = begin; t < end; ++t) {
        state = a[t] * state + b[t];
        prod *= a[t];
        h[t] = state;
        decay[t] = prod;
      }
    }
  });

  // Exclusive scan over chunk summaries gives the state entering each chunk.
  std::vector<double> carry(n_chunks, 0.0);
  for (std::size_t c = 1; c < n_chunks; ++c) {
    const std::size_t last = c * chunk - 1;
    carry[c] = decay[last] * carry[c - 1] + h[last];
  }

  for_each_chunk_group(n_chunks, options.workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = std::max<std::size_t>(lo, 1); c < hi; ++c) {
      const std::size_t begin = c * chunk, end = std::min(n, begin + chunk);
      const double incoming = carry[c];
      for (std::size_t t = begin; t < end; ++t) h[t] += decay[t] * incoming;
    }
  });
  return h;
}

}  // namespace mambamil
