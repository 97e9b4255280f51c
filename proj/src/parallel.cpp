#include "dps/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace dps {

namespace {

std::atomic<int> g_workers{1};

}  // namespace

void set_workers(int n) { g_workers = std::max(n, 1); }

int workers() { return g_workers; }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body) {
    const int w = static_cast<int>(std::min<std::int64_t>(workers(), n));
    if (w <= 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(w);
    std::vector<std::thread> threads;
    threads.reserve(w);
    for (int k = 0; k < w; ++k) {
        const std::int64_t lo = n * k / w, hi = n * (k + 1) / w;
        threads.emplace_back([&, k, lo, hi] {
            for (std::int64_t i = lo; i < hi; ++i) {
                try {
                    body(i);
                } catch (...) {
                    errors[k] = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    // Chunks are ordered, so the first failing chunk holds the smallest index.
    for (int k = 0; k < w; ++k) {
        if (errors[k]) std::rethrow_exception(errors[k]);
    }
}

}  // namespace dps
