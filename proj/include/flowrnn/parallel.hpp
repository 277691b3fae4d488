#pragma once

#include <cstddef>
#include <functional>

namespace flowrnn {

/// Worker count: hardware concurrency capped by FLOWRNN_THREADS when set.
unsigned worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
/// processed exactly once; the first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace flowrnn
