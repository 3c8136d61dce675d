#pragma once

#include <algorithm>

#include <Eigen/Core>

namespace linboot {

enum class Execution { serial, parallel };

/// Genes per work unit in chunked kernels. Partial results are merged in chunk
/// order, so chunked kernels give identical bits for any thread count.
inline constexpr Eigen::Index kGeneChunk = 64;

inline Eigen::Index chunk_count(Eigen::Index n) { return (n + kGeneChunk - 1) / kGeneChunk; }

/// Calls fn(chunk, begin, end) for every chunk of [0, n).
template <class Fn>
void for_each_chunk(Eigen::Index n, Execution exec, Fn&& fn) {
  const Eigen::Index n_chunks = chunk_count(n);
  if (exec == Execution::parallel && n_chunks > 1) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < n_chunks; ++c)
      fn(c, c * kGeneChunk, std::min(n, (c + 1) * kGeneChunk));
  } else {
    for (Eigen::Index c = 0; c < n_chunks; ++c)
      fn(c, c * kGeneChunk, std::min(n, (c + 1) * kGeneChunk));
  }
}

/// Number of worker threads available to top-level parallel loops.
int worker_count();
/// Sets the worker count for subsequent parallel regions (<= 0 means all cores).
void set_worker_count(int workers);

}  // namespace linboot
