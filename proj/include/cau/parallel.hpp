#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace cau {

// Global worker count. Parallelism only changes wall time, never results:
// work is cut into fixed-size chunks and chunk outputs are reduced in index
// order, so the floating-point sum is identical for any thread count.
void set_thread_count(int n);
int thread_count();

// Invoke fn(chunk_index, begin, end) for consecutive chunks of [0, n) of
// width chunk_size. Chunks are distributed over workers; the caller owns a
// per-chunk output slot and reduces sequentially afterwards.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
    return (n + chunk_size - 1) / chunk_size;
}

// Chunk widths are fixed constants (not derived from thread count) so the
// reduction tree is stable across --threads values.
inline constexpr std::size_t kGradChunk = 16;
inline constexpr std::size_t kEvalChunk = 64;

} // namespace cau
