#pragma once

#include <cstddef>
#include <functional>

namespace geodesy {

/// 0 means one worker per hardware thread.
unsigned resolve_threads(unsigned requested);

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first exception is rethrown.
/// Callers write results into slot i so the outcome never depends on scheduling.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace geodesy
