#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace fmvi {

// Runs fn(lo, hi) over disjoint contiguous chunks of [begin, end). Each index
// is handled by exactly one worker and per-index work is self-contained, so
// the result is independent of the thread count.
template <typename Fn>
void parallel_for(int begin, int end, int threads, Fn&& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    fn(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  const int chunk = count / workers;
  const int rem = count % workers;
  int lo = begin;
  for (int w = 0; w < workers; ++w) {
    const int hi = lo + chunk + (w < rem ? 1 : 0);
    if (w + 1 == workers) {
      fn(lo, hi);
    } else {
      pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    lo = hi;
  }
  for (auto& t : pool) t.join();
}

}  // namespace fmvi
