#pragma once

#include <cstddef>
#include <functional>

namespace gcl {

/// Thread cap: GCL_THREADS if set to a positive integer, else hardware concurrency.
[[nodiscard]] std::size_t thread_count();

/// Calls fn(i) for i in [0, n), split into contiguous chunks across up to
/// thread_count() threads. fn must only write to per-index state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gcl
