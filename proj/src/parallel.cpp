#include "hdrsplat/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace hdrsplat {

namespace {

int initial_threads() {
    if (const char* env = std::getenv("PHGS_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{initial_threads()};
    return cap;
}

}  // namespace

int worker_threads() { return thread_cap().load(); }

void set_worker_threads(int n) { thread_cap().store(std::max(1, n)); }

void parallel_for_blocks(std::size_t blocks, const std::function<void(std::size_t)>& body) {
    const auto threads = static_cast<std::size_t>(std::min<std::size_t>(worker_threads(), blocks));
    if (threads <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) body(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t b = next.fetch_add(1); b < blocks; b = next.fetch_add(1)) body(b);
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
}

}  // namespace hdrsplat
