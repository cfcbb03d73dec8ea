#ifndef JFLOW_PARALLEL_HPP
#define JFLOW_PARALLEL_HPP

#include <exception>
#include <functional>

namespace jflow {

/// Worker count: JFLOW_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
int thread_count();

/// Calls fn(i) for i in [0, count) on contiguous blocks, one per worker.
/// If several calls throw, the exception of the smallest i is rethrown, so
/// failures do not depend on scheduling.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace jflow

#endif
