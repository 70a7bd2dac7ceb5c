#pragma once

#include <cstddef>
#include <functional>

namespace dbp {

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. Callers write results
/// into per-index slots, so the outcome does not depend on scheduling. The
/// exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace dbp
