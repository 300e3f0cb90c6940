#pragma once

namespace auvtrack {

/// Keeps freed training buffers in the heap instead of returning them to the
/// OS on every step (glibc only; no-op elsewhere).
void tune_allocator();

}  // namespace auvtrack
