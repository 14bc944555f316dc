#pragma once

#include <cstddef>
#include <functional>

namespace tdet {

/// Worker count from TDET_THREADS (>= 1), falling back to hardware
/// concurrency.
std::size_t thread_budget();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; results must be written to per-index slots.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace tdet
