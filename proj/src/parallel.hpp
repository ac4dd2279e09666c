#pragma once

#include <exception>
#include <vector>

namespace egox::detail {

/// OpenMP loop over [0, n). Exceptions thrown by iterations are captured and
/// the one from the lowest index is rethrown after the loop, so error
/// reporting does not depend on thread scheduling.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n > 0 ? n : 0);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace egox::detail
