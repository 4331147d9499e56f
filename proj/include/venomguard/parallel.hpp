#pragma once

#include <cstddef>
#include <functional>

namespace venomguard {

// Worker cap from VENOMGUARD_THREADS (0 or unset = hardware concurrency).
std::size_t configured_threads();

// Calls fn(i) for i in [0, n) across up to `threads` workers in contiguous
// chunks. Callers write results by index, so output order never depends on
// scheduling. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace venomguard
