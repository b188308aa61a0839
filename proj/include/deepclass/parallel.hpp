#pragma once

#include <cstddef>
#include <functional>

namespace deepclass {

/// Worker count: DEEPCLASS_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Override the worker count for the current process (0 restores the default).
void set_worker_count(std::size_t n);

/// Runs fn(begin, end) over disjoint contiguous chunks of [0, n), possibly on several threads.
/// Callers must make each index's result independent of the chunking.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk = 1);

}  // namespace deepclass
