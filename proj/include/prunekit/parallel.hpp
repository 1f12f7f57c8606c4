#pragma once

#include <cstddef>
#include <functional>

namespace prunekit {

// Worker count used by tensor kernels. Read once from PRUNEKIT_THREADS
// (falls back to hardware concurrency); set_thread_count overrides it.
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs body(begin, end) over contiguous chunks of [0, n). Each index is
// visited exactly once, so per-index results do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace prunekit
