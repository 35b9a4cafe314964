#pragma once

#include "seos/types.hpp"

#include <functional>

namespace seos {

// Thread count from SEOS_THREADS, else hardware concurrency (at least 1).
int default_thread_count();

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be written to
// per-index slots; the first exception is rethrown after all workers stop.
void parallel_for(Index n, int threads, const std::function<void(Index)>& body);

}  // namespace seos
