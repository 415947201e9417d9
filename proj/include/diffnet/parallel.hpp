#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace diffnet {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Indices are
/// dealt round-robin; every index writes only its own output slot, so results
/// never depend on the worker count. If several calls throw, the exception of
/// the lowest index is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t threads = workers < count ? workers : count;
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < count; i += threads) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace diffnet
