#pragma once

#include <cstddef>
#include <functional>

namespace fu {

/// Worker count: FU_THREADS if set to a positive integer, else the number of
/// hardware threads (at least 1).
std::size_t worker_count();

/// Runs fn(i) for every i in [0, n) on up to `workers` threads. Each index is
/// visited exactly once; the first exception thrown by any task is rethrown
/// after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t workers = worker_count());

} // namespace fu
