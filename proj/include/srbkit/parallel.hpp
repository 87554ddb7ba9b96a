// Worker pool helpers. Results are always written by index and reduced in a
// fixed pairwise tree, so outputs do not depend on the worker count.
#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace srb {

inline constexpr const char* kWorkersEnv = "SRBKIT_WORKERS";

inline int worker_count() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    const int n = std::atoi(env);
    if (n >= 1) return std::min(n, 256);
  }
  return 1;
}

/// Calls fn(i) for i in [0, n); fn must only write state owned by index i.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn, int workers = 0) {
  if (workers <= 0) workers = worker_count();
  if (workers == 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const size_t w = std::min<size_t>(static_cast<size_t>(workers), n);
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Pairwise (tree) summation in index order.
inline long double pairwise_sum(std::span<const long double> v) {
  if (v.empty()) return 0.0L;
  if (v.size() <= 8) {
    long double s = 0.0L;
    for (auto x : v) s += x;
    return s;
  }
  const size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

inline double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() <= 8) {
    long double s = 0.0L;
    for (auto x : v) s += x;
    return static_cast<double>(s);
  }
  const size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

}  // namespace srb
