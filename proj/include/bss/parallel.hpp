#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace bss {

/// Runs fn(i) for i in [0, count) on up to `threads` workers.
///
/// Work is split into contiguous static ranges, so results are identical
/// for any thread count as long as every fn(i) writes only to slot i.
/// threads <= 1 runs inline; threads == 0 uses all hardware threads.
inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  unsigned n_workers = threads <= 0 ? std::thread::hardware_concurrency()
                                    : static_cast<unsigned>(threads);
  if (n_workers == 0) n_workers = 1;
  if (n_workers > count) n_workers = static_cast<unsigned>(count);
  if (n_workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  const std::size_t chunk = (count + n_workers - 1) / n_workers;
  for (unsigned w = 0; w < n_workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace bss
