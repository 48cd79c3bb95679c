#pragma once

// Data-parallel map over an index range. Exec::serial is the reference path;
// Exec::parallel distributes indices over OpenMP threads. Results land in
// index order either way, so any reduction done afterwards is deterministic.

#include <cstddef>
#include <exception>
#include <type_traits>
#include <vector>

#include <omp.h>

namespace riemobs {

enum class Exec { serial, parallel };

/// Cap the OpenMP worker count (0 leaves the runtime default).
inline void set_thread_limit(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

template <class F>
auto parallel_map(std::size_t count, F&& fn, Exec exec = Exec::parallel)
    -> std::vector<std::invoke_result_t<F&, std::size_t>> {
  using R = std::invoke_result_t<F&, std::size_t>;
  static_assert(!std::is_same_v<R, bool>, "vector<bool> is not safe for concurrent writes");
  std::vector<R> out(count);
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  // First failure by index is rethrown, independent of scheduling.
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace riemobs
