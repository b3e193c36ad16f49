#pragma once

#include <cstddef>
#include <functional>

namespace hdrsplat {

/// Worker cap, read once from PHGS_THREADS (default: hardware concurrency).
int worker_threads();

/// Overrides the worker cap for the rest of the process (tests).
void set_worker_threads(int n);

/// Runs body(block) for block in [0, blocks). Blocks are fixed-size work units
/// chosen by the caller; callers that reduce must buffer per-block partials
/// and merge them in block order so results do not depend on thread count.
void parallel_for_blocks(std::size_t blocks, const std::function<void(std::size_t)>& body);

}  // namespace hdrsplat
