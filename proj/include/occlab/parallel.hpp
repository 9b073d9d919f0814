#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "occlab/error.hpp"

namespace occlab {

// Evaluates task(i) for i in [0, count) on a pool of `workers` threads and
// returns the results in index order. Tasks must not depend on worker
// identity; the result is then independent of the worker count.
template <class Task>
auto parallel_map(std::size_t count, unsigned workers, Task&& task) {
  using Result = decltype(task(std::size_t{0}));
  std::vector<Result> results(count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = task(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::size_t first_error_index = count;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= count) return;
          try {
            results[i] = task(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            // Keep the lowest failing index so the reported error does not
            // depend on scheduling.
            if (i < first_error_index) {
              first_error_index = i;
              first_error = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

// Like parallel_map but tags any occlab::Error with the failing replica index.
template <class Task>
auto map_replicas(std::size_t replicas, unsigned workers, Task&& task) {
  return parallel_map(replicas, workers, [&](std::size_t i) {
    try {
      return task(i);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string("replica ") + std::to_string(i) + ": " + e.detail());
    }
  });
}

}  // namespace occlab
