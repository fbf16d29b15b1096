#ifndef FSUDA_RUNTIME_HPP
#define FSUDA_RUNTIME_HPP

namespace fsuda {

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training allocates and frees the same tape buffers every episode; without
/// this each episode pays for fresh page faults. No-op outside glibc.
void tune_allocator();

}  // namespace fsuda

#endif  // FSUDA_RUNTIME_HPP
