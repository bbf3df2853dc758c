#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace reeflora {

// Worker cap from REEF_LORA_THREADS; defaults to 1 so results stay
// bit-reproducible unless the user opts in.
inline int worker_thread_count() {
    const char* env = std::getenv("REEF_LORA_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

// Index-parallel loop. fn(i) must only write to slots owned by index i, so
// output is identical for any thread count.
template <typename Fn>
void parallel_for(std::int64_t n, const Fn& fn) {
    const int threads = worker_thread_count();
    if (threads <= 1 || n < 2) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int used = static_cast<int>(std::min<std::int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(used));
    for (int t = 0; t < used; ++t) {
        pool.emplace_back([&fn, t, used, n]() {
            for (std::int64_t i = t; i < n; i += used) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace reeflora
