#pragma once

// Records the largest single heap request made while armed. Covers malloc,
// calloc, realloc and the aligned allocators, which is where operator new and
// Eigen end up.

#include <cstddef>

namespace alloc_probe {

void arm();
/// Disarms and returns the largest request in bytes seen since arm().
std::size_t disarm();

}  // namespace alloc_probe
