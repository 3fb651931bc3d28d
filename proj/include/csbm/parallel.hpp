#pragma once

#include <cstddef>
#include <functional>

namespace csbm {

// Runs body(0..count-1) on up to `threads` workers. Callers write results into
// slots indexed by the argument, so output never depends on scheduling.
// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

// --threads, then CSBM_SNR_THREADS, then hardware concurrency.
unsigned resolve_threads(unsigned requested);

}  // namespace csbm
