#pragma once

#include <cstddef>
#include <functional>

namespace tsm {

/// Worker count used when a caller passes 0.
unsigned default_workers();

/// Runs body(i) for i in [0, n) on up to `workers` threads (0 = default).
/// Iterations must write to disjoint outputs. The first exception thrown by
/// any iteration is rethrown on the calling thread.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace tsm
