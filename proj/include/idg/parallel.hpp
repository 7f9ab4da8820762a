#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace idg {

// Runs body(i) for i in [0, n) over `jobs` threads in contiguous chunks.
// Callers write results by index, so output order never depends on jobs.
// The first exception (by chunk) is rethrown after all threads join.
template <class F>
void parallel_for(std::uint64_t n, unsigned jobs, F&& body) {
  jobs = std::max(1u, jobs);
  if (jobs == 1 || n < 2) {
    for (std::uint64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  const std::uint64_t chunk = (n + jobs - 1) / jobs;
  for (unsigned t = 0; t < jobs; ++t) {
    const std::uint64_t lo = t * chunk;
    const std::uint64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, t, lo, hi] {
      try {
        for (std::uint64_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace idg
