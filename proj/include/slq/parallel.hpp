#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace slq {

/// Default worker count for path-parallel loops (1 unless changed).
int default_workers();
void set_default_workers(int workers);

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the worker count, and each index is visited exactly
/// once, so any per-index output is independent of scheduling. The exception
/// from the lowest-numbered chunk is rethrown.
template <class Body>
void parallel_chunks(long n, int workers, Body&& body) {
  if (workers <= 0) workers = default_workers();
  workers = static_cast<int>(std::clamp<long>(workers, 1, std::max<long>(n, 1)));
  if (workers == 1) {
    body(0L, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const long chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const long begin = std::min(n, w * chunk);
    const long end = std::min(n, begin + chunk);
    threads.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace slq
