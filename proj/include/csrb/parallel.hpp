#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace csrb {

/// Static block partition of [0, n) over `threads` workers. Each index is
/// processed exactly once; callers write to per-index slots, so results are
/// identical for any thread count, and aggregation stays with the caller in
/// index order.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t k = 0; k < threads; ++k) {
    std::size_t lo = n * k / threads;
    std::size_t hi = n * (k + 1) / threads;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace csrb
