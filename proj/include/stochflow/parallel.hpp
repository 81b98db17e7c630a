#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace sflow {

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
/// contiguous partition. fn must only write to index-owned storage; the
/// result is then independent of the thread count. The first exception
/// thrown by any worker is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

/// Pairwise (tree) summation in index order. The association pattern
/// depends only on the length, never on scheduling.
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 16;
  if (values.size() <= kLeaf) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

/// Sample mean and standard error of the mean, both from fixed-order
/// pairwise sums.
struct SampleStats {
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::size_t count = 0;
};

inline SampleStats sample_stats(std::span<const double> values) {
  SampleStats out;
  out.count = values.size();
  if (values.empty()) return out;
  out.mean = pairwise_sum(values) / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double dev = values[i] - out.mean;
    sq[i] = dev * dev;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(values.size() - 1);
  out.stderr_mean = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

/// Thread count from the STOCHFLOW_THREADS environment variable, else 1.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("STOCHFLOW_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace sflow
