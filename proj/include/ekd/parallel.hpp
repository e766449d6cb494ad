#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <vector>

namespace ekd {

// Serial is the reference path; Parallel fans the same per-index work out
// over OpenMP threads. Both must produce bit-identical results because each
// index owns its own random stream and results are reduced in index order.
enum class Exec { Serial, Parallel };

// Exceptions may not cross an OpenMP region, so the parallel path captures
// them per index and rethrows the lowest-index one, matching what the serial
// path would have thrown first.
template <typename Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename T, typename Fn>
std::vector<T> map_indices(std::size_t n, Exec exec, Fn&& fn) {
  std::vector<T> out(n);
  for_each_index(n, exec, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace ekd
