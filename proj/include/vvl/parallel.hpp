#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vvl {

/// Worker count: VVL_THREADS when set to a positive integer, otherwise the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("VVL_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {
inline thread_local bool inside_parallel_for = false;
}

/// Runs body(i) for i in [0, n). Results must be written to per-index slots so the outcome does
/// not depend on scheduling. The first exception (lowest index) is rethrown after all workers stop.
/// A nested call runs serially on the calling worker.
template <class F>
void parallel_for(std::size_t n, F&& body, unsigned threads = 0) {
  if (threads == 0) threads = worker_count();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (detail::inside_parallel_for) threads = 1;
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto work = [&] {
    const bool outer = detail::inside_parallel_for;
    detail::inside_parallel_for = true;
    struct Restore {
      bool v;
      ~Restore() { detail::inside_parallel_for = v; }
    } restore{outer};
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace vvl
