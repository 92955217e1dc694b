#pragma once

#include <cstddef>
#include <functional>

namespace compresid {

/// Resolves a thread-count request; 0 means all hardware threads.
std::size_t resolve_threads(std::size_t requested);

/// Runs body(0..count-1) on up to `threads` workers. Calls made from inside a
/// running parallel_for execute serially, so nested loops never oversubscribe.
/// The exception from the lowest failing index is rethrown after all workers
/// stop.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace compresid
