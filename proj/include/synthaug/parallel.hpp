#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace synthaug {

// Runs body(i) for i in [0, n) across the OpenMP team. Each index must write
// only to its own output slot. If any body throws, the exception from the
// lowest index is rethrown after the loop, so failures are reproducible
// regardless of thread count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void set_thread_count(int threads);
int thread_count();

}  // namespace synthaug
