#pragma once

#include <functional>

namespace dtmix {

// Runs fn(0..n-1) on up to `threads` workers (0 = hardware concurrency).
// Each index is processed exactly once; the first exception thrown by any
// worker is rethrown after all workers finish.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace dtmix
