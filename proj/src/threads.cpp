#include "mvcons/threads.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace mvcons {

namespace {
std::atomic<int> g_max_threads{0};

int resolve_threads() {
    int n = g_max_threads.load(std::memory_order_relaxed);
    if (n <= 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
    }
    return n;
}
}  // namespace

void set_max_threads(int n) { g_max_threads.store(n, std::memory_order_relaxed); }

int max_threads() { return resolve_threads(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (n <= 0) return;
    const int workers = std::min<std::int64_t>(resolve_threads(), n);
    if (workers <= 1 || n < 2) {
        body(0, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    body(0, std::min<std::int64_t>(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace mvcons
