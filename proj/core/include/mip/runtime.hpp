#pragma once

namespace mip {

/// Keeps freed heap blocks inside the process instead of returning them to the
/// kernel after every forward pass. Large tape buffers otherwise cost a fresh
/// mmap and page faults per step. No-op outside glibc. Safe to call repeatedly.
void configure_allocator();

}  // namespace mip
