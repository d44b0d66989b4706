#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace emot {

// Worker count: THREADS environment variable when set, else the fallback.
inline unsigned thread_budget(unsigned fallback = 1) {
  if (const char* env = std::getenv("THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, fallback);
}

// Splits [0, count) into at most `threads` contiguous chunks and runs
// fn(begin, end) on each. Chunks write disjoint outputs, so results do not
// depend on the thread count.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count < 2) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t t = std::min<std::size_t>(threads, count);
  const std::size_t chunk = (count + t - 1) / t;
  std::vector<std::jthread> pool;
  pool.reserve(t);
  for (std::size_t k = 0; k < t; ++k) {
    const std::size_t b = k * chunk;
    const std::size_t e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
}

}  // namespace emot
