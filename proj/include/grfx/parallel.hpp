#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace grfx {

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once and results are expected to be written to slot i,
/// so the outcome does not depend on the number of workers.
template <class Body>
void parallel_for(std::int64_t n, int workers, Body&& body) {
  workers = std::max(1, workers);
  if (workers == 1 || n < 2) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  const auto count = static_cast<std::int64_t>(std::min<std::int64_t>(workers, n));
  std::vector<std::thread> threads;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  threads.reserve(static_cast<std::size_t>(count));
  for (std::int64_t w = 0; w < count; ++w) {
    threads.emplace_back([&, w] {
      const std::int64_t begin = n * w / count;
      const std::int64_t end = n * (w + 1) / count;
      try {
        for (std::int64_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace grfx
