#pragma once

// Splittable seeding for reproducible Monte Carlo: every chunk of work owns a
// xoshiro256** stream derived from (seed, chunk index) through SplitMix64, so
// results do not depend on how chunks are scheduled across threads.

#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace steinind {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// xoshiro256** 1.0; satisfies UniformRandomBitGenerator.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed) noexcept {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

/// Stream for one chunk of one experiment. Distinct (seed, chunk) pairs give
/// statistically independent streams.
inline Xoshiro256 chunk_stream(std::uint64_t seed, std::uint64_t chunk) noexcept {
    SplitMix64 mix(seed ^ 0x5851F42D4C957F2DULL);
    std::uint64_t a = mix.next();
    SplitMix64 mix2(a + chunk * 0xD1342543DE82EF95ULL);
    return Xoshiro256(mix2.next());
}

/// Derive an independent sub-seed, e.g. to give two estimators of one
/// experiment unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    SplitMix64 mix(seed * 0x9E3779B97F4A7C15ULL + salt);
    mix.next();
    return mix.next();
}

/// Standard Gaussian vectors drawn from one stream.
class GaussianDraw {
public:
    explicit GaussianDraw(Xoshiro256 engine) : engine_(engine) {}

    double operator()() { return normal_(engine_); }

    void fill(std::span<double> out) {
        for (auto& v : out) v = normal_(engine_);
    }

    double chi_squared(double dof) {
        if (dof <= 0.0) return 0.0;
        std::chi_squared_distribution<double> chi(dof);
        return chi(engine_);
    }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    Xoshiro256& engine() noexcept { return engine_; }

private:
    Xoshiro256 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace steinind
