#pragma once

#include <cstddef>
#include <functional>

namespace uapforge {

// Worker cap from UAPFORGE_THREADS (unset: hardware concurrency, min 1).
std::size_t thread_count();

// Runs body(i) for i in [0, n) on up to thread_count() threads. Callers write
// results into per-index slots and reduce them afterwards in index order, so
// the outcome never depends on the thread count. The first exception thrown
// by any body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace uapforge
