#ifndef NIFFLOW_PARALLEL_HPP
#define NIFFLOW_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace nifflow {

/// Upper bound on worker threads used by library-internal loops. Zero means
/// "use hardware concurrency". Reads NIFFLOW_THREADS when never set.
void set_thread_limit(unsigned threads);
unsigned thread_limit();

/// Runs body(i) for i in [0, count). Each index is visited exactly once;
/// callers write results into per-index slots so output never depends on
/// scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace nifflow

#endif  // NIFFLOW_PARALLEL_HPP
