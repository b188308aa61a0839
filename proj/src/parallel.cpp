#include "deepclass/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace deepclass {

namespace {

std::atomic<std::size_t> g_override{0};

std::size_t default_workers() {
    static const std::size_t n = [] {
        std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("DEEPCLASS_THREADS")) {
            try {
                long v = std::stol(env);
                if (v > 0) return std::min<std::size_t>(static_cast<std::size_t>(v), 256);
            } catch (...) {
            }
        }
        return hw;
    }();
    return n;
}

}  // namespace

std::size_t worker_count() {
    std::size_t o = g_override.load();
    return o ? o : default_workers();
}

void set_worker_count(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk) {
    if (n == 0) return;
    std::size_t workers = std::min(worker_count(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        std::size_t b = w * chunk;
        std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        threads.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(0, std::min(n, chunk));
    for (auto& t : threads) t.join();
}

}  // namespace deepclass
