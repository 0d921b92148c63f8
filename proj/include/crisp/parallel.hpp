#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace crisp {

/// Worker count: hardware concurrency, overridable via CRISP_THREADS.
inline unsigned worker_count() {
  if (const char* env = std::getenv("CRISP_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Run fn(block_index, begin, end) over [0, n) split into fixed-size blocks.
/// The block partition is independent of the thread count, so per-block
/// results combined in block order are deterministic on any machine.
inline void parallel_blocks(std::size_t n, std::size_t block_size,
                            const std::function<void(std::size_t, std::size_t,
                                                     std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t num_blocks = (n + block_size - 1) / block_size;
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(worker_count(), num_blocks));
  if (threads <= 1) {
    for (std::size_t b = 0; b < num_blocks; ++b) {
      fn(b, b * block_size, std::min(n, (b + 1) * block_size));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= num_blocks) return;
      fn(b, b * block_size, std::min(n, (b + 1) * block_size));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work);
  for (auto& th : pool) th.join();
}

/// Neumaier compensated accumulator; keeps long sums of pair terms accurate
/// regardless of summation order.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  void add(const KahanSum& other) {
    add(other.sum);
    comp += other.comp;
  }
  double value() const { return sum + comp; }
};

}  // namespace crisp
