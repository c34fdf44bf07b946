#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace propinn {

/// Keeps large tape buffers on the heap between evaluations instead of
/// returning them to the kernel. Call once at program start; it changes
/// timing only, never results.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace propinn
