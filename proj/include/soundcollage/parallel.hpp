#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace soundcollage {

// Runs body(i) for i in [0, n). Iterations must be independent and write only
// to their own output slots; results are then identical regardless of thread
// count, which keeps seeded runs reproducible on any machine.
template <typename F>
void parallel_for(size_t n, F&& body) {
    unsigned hw = std::thread::hardware_concurrency();
    size_t n_threads = hw == 0 ? 1 : (hw < n ? hw : n);
    if (n_threads <= 1) {
        for (size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                body(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace soundcollage
