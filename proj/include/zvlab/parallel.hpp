#pragma once

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace zvlab {

/// Worker count: ZVLAB_THREADS if set (>= 1), else hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("ZVLAB_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

/// Runs body(i) for i in [0, n). Work is handed out in chunks through an
/// atomic cursor, so callers must write results into slot i and never
/// accumulate across indices; that keeps output independent of the
/// worker count. The first exception thrown by any body is rethrown.
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t chunk = 64) {
    const unsigned workers = std::min<std::size_t>(worker_count(), (n + chunk - 1) / std::max<std::size_t>(chunk, 1));
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        for (;;) {
            const std::size_t begin = cursor.fetch_add(chunk);
            if (begin >= n) return;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                cursor.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Pairwise sum in a fixed tree order (deterministic, O(log n) error growth).
inline double tree_sum(std::span<const double> v) {
    if (v.empty()) return 0.0;
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return tree_sum(v.first(half)) + tree_sum(v.subspan(half));
}

/// Mean and standard error of the mean from per-sample values.
struct MeanStat {
    double mean = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

inline MeanStat mean_and_se(std::span<const double> v) {
    MeanStat out;
    out.count = v.size();
    if (v.empty()) return out;
    out.mean = tree_sum(v) / static_cast<double>(v.size());
    if (v.size() < 2) return out;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - out.mean;
        sq[i] = d * d;
    }
    const double var = tree_sum(sq) / static_cast<double>(v.size() - 1);
    out.se = std::sqrt(var / static_cast<double>(v.size()));
    return out;
}

}  // namespace zvlab
