#pragma once

#include <cstddef>
#include <functional>

namespace npwnet {

//! Worker cap derived from the NPWNET_THREADS environment variable;
//! 0 or unset means hardware concurrency.
int max_threads();

//! Runs body(i) for i in [0, count), possibly on several threads.
//! Bodies must write only to disjoint slots; iteration order is not
//! guaranteed, so results must not depend on it.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace npwnet
