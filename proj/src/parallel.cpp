#include "cau/parallel.hpp"

#include <atomic>

namespace cau {

namespace {
int g_threads = 1;
} // namespace

void set_thread_count(int n) { g_threads = n < 1 ? 1 : n; }

int thread_count() { return g_threads; }

void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t chunks = chunk_count(n, chunk_size);
    const int workers = std::min<std::size_t>(static_cast<std::size_t>(g_threads), chunks);
    auto run_chunk = [&](std::size_t c) {
        const std::size_t b = c * chunk_size;
        const std::size_t e = std::min(b + chunk_size, n);
        fn(c, b, e);
    };
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t c = next.fetch_add(1);
                if (c >= chunks) break;
                run_chunk(c);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace cau
