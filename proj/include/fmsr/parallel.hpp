#pragma once

#include <cstddef>
#include <functional>

namespace fmsr {

/// Process-wide worker count used by parallel loops. 1 means fully sequential.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs fn(i) for i in [0, n). Each index must write only its own output slot;
/// callers reduce afterwards in index order so results do not depend on the
/// number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fmsr
