#pragma once

// Process-wide worker count and a static-partition parallel loop. Callers
// write results into per-index slots and reduce in index order, so output
// does not depend on the worker count.

#include <cstdint>
#include <functional>

namespace dps {

// n < 1 resets to 1.
void set_workers(int n);
int workers();

// Runs body(i) for i in [0, n). With one worker, or n < 2, runs inline.
// If several indices throw, the exception of the smallest index is
// rethrown after all workers finish.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace dps
