#include "fsuda/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fsuda {

void tune_allocator() {
#if defined(__GLIBC__)
    constexpr int kLimit = 1 << 30;
    mallopt(M_MMAP_THRESHOLD, kLimit);
    mallopt(M_TRIM_THRESHOLD, kLimit);
#endif
}

}  // namespace fsuda
