#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace cone_sampler {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014). Frozen: changing it
/// changes every generated dataset.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// Seed of substream `index` under `base`: the index-th output of a
/// SplitMix64 generator started at `base`, i.e.
///
///     mix64(base + (index + 1) * 0x9E3779B97F4A7C15)
///
/// Substreams depend only on (base, index), never on iteration order or on
/// how work is split across threads.
inline constexpr std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return mix64(base + (index + 1) * kGoldenGamma);
}

/// Two-level derivation used by the dataset pipeline: one stream per
/// (identity, channel). Channel 0 drives angular perturbation, channel 1
/// the observation jitter.
inline constexpr std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index,
                                              std::uint64_t channel) noexcept {
    return substream_seed(substream_seed(base, index), channel);
}

/// Seeded random stream. The engine is std::mt19937_64 (fully specified by
/// the standard). Uniforms are derived by hand and normals come from Boost's
/// ziggurat, so outputs do not depend on the standard library in use.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n), unbiased. n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = -n % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t x = engine_();
            if (x >= limit) return x % n;
        }
    }

    /// Standard normal (ziggurat).
    double normal() { return normal_(engine_); }

private:
    std::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_;
};

}  // namespace cone_sampler
