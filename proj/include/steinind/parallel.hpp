#pragma once

// Chunked Monte Carlo with a fixed reduction order. Chunks are claimed by
// workers in any order, but their partial statistics are merged by chunk
// index, so the result is bit-identical for any worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "steinind/error.hpp"
#include "steinind/random.hpp"

namespace steinind {

/// Environment variable holding the worker count.
inline constexpr const char* kWorkersEnv = "STEININD_WORKERS";

/// Worker count from STEININD_WORKERS, defaulting to the hardware concurrency.
inline std::size_t default_workers() {
    if (const char* env = std::getenv(kWorkersEnv)) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
        throw ConfigError(std::string(kWorkersEnv) + " must be a positive integer");
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Run fn(i) for i in [0, count) on `workers` threads; returns results in index order.
template <class R, class F>
std::vector<R> parallel_map(std::size_t count, F&& fn, std::size_t workers = 0) {
    if (workers == 0) workers = default_workers();
    std::vector<R> out(count);
    if (count == 0) return out;
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= count) return;
                    try {
                        out[i] = fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next.store(count);
                        return;
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

/// Welford accumulator; merge() is Chan's parallel update.
struct RunningStats {
    double count = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) noexcept {
        count += 1.0;
        const double d = x - mean;
        mean += d / count;
        m2 += d * (x - mean);
    }

    void merge(const RunningStats& o) noexcept {
        if (o.count == 0.0) return;
        if (count == 0.0) {
            *this = o;
            return;
        }
        const double n = count + o.count;
        const double d = o.mean - mean;
        mean += d * o.count / n;
        m2 += o.m2 + d * d * count * o.count / n;
        count = n;
    }

    double variance() const noexcept { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
    double std_error() const noexcept { return count > 1.0 ? std::sqrt(variance() / count) : 0.0; }
};

struct MonteCarloPlan {
    std::size_t samples = 100000;
    std::uint64_t seed = 1;
    std::size_t chunk_size = 4096;
    std::size_t workers = 0;  // 0: default_workers()
};

/// Draw plan.samples samples in fixed-size chunks. `sample(draw, stats)` is
/// called once per sample and adds to `stats_per_sample` running statistics.
template <class SampleFn>
std::vector<RunningStats> run_monte_carlo(const MonteCarloPlan& plan, std::size_t stats_per_sample,
                                          SampleFn&& sample) {
    if (plan.samples < 2) throw ConfigError("Monte Carlo needs at least 2 samples");
    if (plan.chunk_size == 0) throw ConfigError("chunk size must be positive");
    const std::size_t chunks = (plan.samples + plan.chunk_size - 1) / plan.chunk_size;
    auto partial = parallel_map<std::vector<RunningStats>>(
        chunks,
        [&](std::size_t c) {
            std::vector<RunningStats> stats(stats_per_sample);
            GaussianDraw draw(chunk_stream(plan.seed, c));
            const std::size_t begin = c * plan.chunk_size;
            const std::size_t end = std::min(plan.samples, begin + plan.chunk_size);
            for (std::size_t i = begin; i < end; ++i) sample(draw, stats);
            return stats;
        },
        plan.workers);
    std::vector<RunningStats> total(stats_per_sample);
    for (const auto& p : partial)
        for (std::size_t k = 0; k < stats_per_sample; ++k) total[k].merge(p[k]);
    return total;
}

}  // namespace steinind
