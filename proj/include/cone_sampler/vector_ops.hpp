#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace cone_sampler {

/// Dot product with a fixed four-lane accumulation order. The order is part
/// of the determinism contract: the same inputs give the same bits no matter
/// which thread or which caller computes them, and dot(a, b) == dot(b, a).
inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    const std::size_t n = a.size();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

/// Cosine similarity of two arbitrary (non-zero) vectors.
inline double cosine(std::span<const double> a, std::span<const double> b) noexcept {
    return dot(a, b) / (norm(a) * norm(b));
}

}  // namespace cone_sampler
