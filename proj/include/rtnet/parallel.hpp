#pragma once

#include <cstddef>
#include <functional>

namespace rtnet {

/// Worker count: RTNET_WORKERS when set to a positive integer, otherwise
/// `configured`, otherwise the hardware concurrency. Never below 1.
std::size_t worker_count(std::size_t configured = 0);

/// Calls fn(i) for i in [0, count) on up to `workers` threads. Indices are
/// claimed in order; fn must not throw (capture failures per index).
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace rtnet
