#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace argus {

/// Worker count for batch stages: ARGUS_BENCH_THREADS pins it, hardware
/// concurrency is the default.
inline size_t worker_count() {
  if (const char* env = std::getenv("ARGUS_BENCH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return size_t(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) over a bounded set of workers. Work items must
/// be independent; exceptions are rethrown on the caller thread.
inline void parallel_for(size_t n, size_t workers,
                         const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  workers = std::max<size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  std::atomic<size_t> next{0};
  for (size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= n) return;
          fn(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace argus
