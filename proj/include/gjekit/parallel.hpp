#pragma once

#include <cstddef>
#include <functional>

namespace gjekit {

/// Worker count used by parallel loops. Zero means "read GJEKIT_THREADS or
/// fall back to hardware concurrency".
void set_thread_count(int threads);
int thread_count();

/// Calls fn(i) for i in [0, n) across worker threads. Each index is visited
/// exactly once; callers write results into per-index slots so the outcome
/// does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gjekit
