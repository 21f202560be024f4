#pragma once

// Angular perturbation of unit-norm identity embeddings on the hypersphere.
//
// A perturbed sample of reference v is built as
//
//     s ~ U[lb, 1],  theta = acos(s)
//     u = (n - (n.v) v) / |n - (n.v) v|,  n ~ N(0, I_d)
//     v' = cos(theta) v + sin(theta) u
//
// so |v'| = 1 and <v', v> = s exactly up to rounding. When a reference set is
// available the lower bound is raised to cos(half the angle to the nearest
// other identity), which keeps every sample at least as close to its own
// reference as to any other.
//
// All arithmetic is double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cone_sampler/error.hpp"
#include "cone_sampler/parallel.hpp"
#include "cone_sampler/random.hpp"
#include "cone_sampler/vector_ops.hpp"

namespace cone_sampler {

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kOrthogonalityTolerance = 1e-6;
inline constexpr double kTangentResidualFloor = 1e-12;
inline constexpr int kMaxRedraws = 16;

class UnitVector {
public:
    /// Takes ownership of already-normalized components; throws if the norm
    /// is off by more than 1e-9 or d < 2.
    static UnitVector from_components(std::vector<double> components) {
        check_dimension(components.size());
        for (double x : components)
            if (!std::isfinite(x))
                detail::fail(ErrorClass::input_format, "non-finite", "unit vector has a non-finite component");
        const double n = norm(components);
        if (std::abs(n - 1.0) > kUnitNormTolerance)
            detail::fail(ErrorClass::usage, "not-unit-norm",
                         "vector norm " + std::to_string(n) + " is not within 1e-9 of 1");
        return UnitVector(std::move(components));
    }

    std::size_t dim() const noexcept { return c_.size(); }
    std::span<const double> components() const noexcept { return c_; }
    double operator[](std::size_t i) const noexcept { return c_[i]; }

    friend bool operator==(const UnitVector&, const UnitVector&) = default;

    static void check_dimension(std::size_t d) {
        if (d < 2)
            detail::fail(ErrorClass::input_format, "dimension-too-small",
                         "embedding dimension must be at least 2, got " + std::to_string(d));
    }

private:
    explicit UnitVector(std::vector<double> c) : c_(std::move(c)) {}
    std::vector<double> c_;
};

/// Normalize v to unit length. Zero-norm and non-finite inputs are errors.
inline UnitVector normalize(std::span<const double> v) {
    UnitVector::check_dimension(v.size());
    for (double x : v)
        if (!std::isfinite(x))
            detail::fail(ErrorClass::input_format, "non-finite", "cannot normalize a non-finite vector");
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n))
        detail::fail(ErrorClass::input_format, "zero-norm", "cannot normalize a zero-norm vector");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return UnitVector::from_components(std::move(out));
}

/// Cosine lower bound of a spherical cap, lb in [0, 1].
class ConeSpec {
public:
    explicit ConeSpec(double lower_bound) : lb_(lower_bound) {
        if (!(lower_bound >= 0.0 && lower_bound <= 1.0))
            detail::fail(ErrorClass::usage, "invalid-lower-bound",
                         "cone lower bound must lie in [0, 1], got " + std::to_string(lower_bound));
    }
    double lower_bound() const noexcept { return lb_; }
    double max_angle() const noexcept { return std::acos(lb_); }

    friend bool operator==(const ConeSpec&, const ConeSpec&) = default;

private:
    double lb_;
};

/// Reference identities plus the cached cosine to each one's nearest other
/// identity. The cache is kept consistent on every insert.
class IdentitySet {
public:
    explicit IdentitySet(std::size_t dim) : dim_(dim) { UnitVector::check_dimension(dim); }

    /// Builds the set and its nearest-neighbour cache. ids default to 0..C-1.
    /// The O(C^2 d) scan is split across `threads` workers; the result does
    /// not depend on the split.
    IdentitySet(std::vector<UnitVector> vectors, std::vector<std::int64_t> ids = {}, unsigned threads = 0)
        : dim_(vectors.empty() ? 0 : vectors.front().dim()), vectors_(std::move(vectors)) {
        if (vectors_.empty()) detail::fail(ErrorClass::usage, "empty-identity-set", "identity set needs C >= 1");
        for (const auto& v : vectors_)
            if (v.dim() != dim_)
                detail::fail(ErrorClass::input_format, "dimension-mismatch", "identity vectors differ in dimension");
        if (ids.empty()) {
            ids.resize(vectors_.size());
            for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
        }
        if (ids.size() != vectors_.size())
            detail::fail(ErrorClass::usage, "id-count-mismatch", "one id per identity vector required");
        check_distinct(ids);
        ids_ = std::move(ids);
        nn_cos_ = nearest_neighbour_cosines(threads);
    }

    std::size_t size() const noexcept { return vectors_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const UnitVector& vector(std::size_t i) const { return vectors_.at(i); }
    const std::vector<UnitVector>& vectors() const noexcept { return vectors_; }
    std::int64_t id(std::size_t i) const { return ids_.at(i); }
    const std::vector<std::int64_t>& ids() const noexcept { return ids_; }

    /// max over j != i of <v_i, v_j>; nullopt when C == 1.
    std::optional<double> nn_cos(std::size_t i) const {
        if (i >= size()) detail::fail(ErrorClass::usage, "identity-out-of-range", "identity index out of range");
        if (size() < 2) return std::nullopt;
        return nn_cos_[i];
    }

    void insert(UnitVector v, std::int64_t id) {
        std::vector<double> dots(vectors_.size());
        for (std::size_t j = 0; j < vectors_.size(); ++j) dots[j] = dot(v.components(), vectors_[j].components());
        insert_with_dots(std::move(v), id, dots);
    }

    /// Insert when <v, v_j> for every current member is already known
    /// (reference-set generation computes them during rejection).
    void insert_with_dots(UnitVector v, std::int64_t id, std::span<const double> dots) {
        if (v.dim() != dim_)
            detail::fail(ErrorClass::usage, "dimension-mismatch", "inserted vector has the wrong dimension");
        if (dots.size() != vectors_.size())
            detail::fail(ErrorClass::usage, "dot-count-mismatch", "need one dot product per member");
        for (auto existing : ids_)
            if (existing == id) detail::fail(ErrorClass::usage, "duplicate-id", "identity id " + std::to_string(id) + " already present");
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < dots.size(); ++j) {
            nn_cos_[j] = std::max(nn_cos_[j], dots[j]);
            best = std::max(best, dots[j]);
        }
        vectors_.push_back(std::move(v));
        ids_.push_back(id);
        nn_cos_.push_back(best);
    }

private:
    static void check_distinct(const std::vector<std::int64_t>& ids) {
        std::unordered_set<std::int64_t> seen;
        for (auto id : ids)
            if (!seen.insert(id).second)
                detail::fail(ErrorClass::input_format, "duplicate-id", "identity id " + std::to_string(id) + " repeated");
    }

    std::vector<double> nearest_neighbour_cosines(unsigned threads) const {
        const std::size_t c = vectors_.size();
        constexpr std::size_t tile = 64;
        // Contiguous copy keeps each tile pair resident in cache.
        std::vector<double> flat(c * dim_);
        for (std::size_t i = 0; i < c; ++i)
            std::copy(vectors_[i].components().begin(), vectors_[i].components().end(), flat.begin() + static_cast<std::ptrdiff_t>(i * dim_));
        const std::size_t d = dim_;
        const std::size_t tiles = (c + tile - 1) / tile;
        const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), tiles);
        // Per-worker partial maxima merged afterwards; max is exact, so the
        // merge order cannot change the result.
        std::vector<std::vector<double>> partial(workers, std::vector<double>(c, -std::numeric_limits<double>::infinity()));
        parallel_for(workers, static_cast<unsigned>(workers), [&](std::size_t wb, std::size_t we) {
            for (std::size_t w = wb; w < we; ++w) {
                auto& best = partial[w];
                // Interleaved tile rows balance the triangular workload.
                for (std::size_t ti = w; ti < tiles; ti += workers) {
                    const std::size_t i0 = ti * tile, i1 = std::min(c, i0 + tile);
                    for (std::size_t tj = ti; tj < tiles; ++tj) {
                        const std::size_t j0 = tj * tile, j1 = std::min(c, j0 + tile);
                        for (std::size_t i = i0; i < i1; ++i) {
                            const std::span<const double> vi(flat.data() + i * d, d);
                            double bi = best[i];
                            for (std::size_t j = std::max(j0, i + 1); j < j1; ++j) {
                                const double x = dot(vi, std::span<const double>(flat.data() + j * d, d));
                                bi = std::max(bi, x);
                                if (x > best[j]) best[j] = x;
                            }
                            best[i] = bi;
                        }
                    }
                }
            }
        });
        std::vector<double> out(c, -std::numeric_limits<double>::infinity());
        for (const auto& p : partial)
            for (std::size_t i = 0; i < c; ++i) out[i] = std::max(out[i], p[i]);
        return out;
    }

    std::size_t dim_;
    std::vector<UnitVector> vectors_;
    std::vector<std::int64_t> ids_;
    std::vector<double> nn_cos_;
};

/// One angular draw: the target cosine, its angle, and the tangent direction.
struct PerturbationDraw {
    double cosine;
    double angle;
    UnitVector tangent;
};

/// Abstract model-noise output, any length >= 1, finite components.
class NoisePrediction {
public:
    explicit NoisePrediction(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) detail::fail(ErrorClass::usage, "empty-noise-prediction", "noise prediction needs m >= 1");
        for (double x : values_)
            if (!std::isfinite(x)) detail::fail(ErrorClass::usage, "non-finite", "noise prediction has a non-finite value");
    }
    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    friend bool operator==(const NoisePrediction&, const NoisePrediction&) = default;

private:
    std::vector<double> values_;
};

class GuidanceScale {
public:
    explicit GuidanceScale(double omega) : omega_(omega) {
        if (!(std::isfinite(omega) && omega >= 0.0))
            detail::fail(ErrorClass::usage, "invalid-guidance-scale", "guidance scale must be finite and >= 0");
    }
    double omega() const noexcept { return omega_; }

private:
    double omega_;
};

/// Project n onto the hyperplane orthogonal to v and normalize. Returns
/// nullopt when the residual norm is below 1e-12. A second Gram-Schmidt pass
/// keeps |<u, v>| at rounding level even when n is nearly parallel to v.
inline std::optional<UnitVector> project_to_tangent(const UnitVector& v, std::span<const double> n) {
    if (n.size() != v.dim()) detail::fail(ErrorClass::usage, "dimension-mismatch", "noise and vector differ in dimension");
    const auto vc = v.components();
    std::vector<double> r(n.begin(), n.end());
    for (int pass = 0; pass < 2; ++pass) {
        const double along = dot(r, vc);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= along * vc[i];
    }
    const double len = norm(r);
    if (!(len >= kTangentResidualFloor)) return std::nullopt;
    for (double& x : r) x /= len;
    return UnitVector::from_components(std::move(r));
}

/// Uniformly distributed unit tangent at v: project a fresh N(0, I) draw.
inline UnitVector sample_tangent(const UnitVector& v, RandomStream& rng) {
    std::vector<double> n(v.dim());
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        for (double& x : n) x = rng.normal();
        if (auto u = project_to_tangent(v, n)) return std::move(*u);
    }
    detail::fail(ErrorClass::internal, "tangent-redraw-exhausted",
                 "16 consecutive normal draws were parallel to the reference; the random stream is broken");
}

/// cos(theta) v + sin(theta) u, for u orthogonal to v and theta in [0, pi/2].
inline UnitVector rotate_toward(const UnitVector& v, const UnitVector& u, double theta) {
    if (u.dim() != v.dim()) detail::fail(ErrorClass::usage, "dimension-mismatch", "tangent and vector differ in dimension");
    if (!(theta >= 0.0 && theta <= std::numbers::pi / 2))
        detail::fail(ErrorClass::usage, "angle-out-of-range", "rotation angle must lie in [0, pi/2], got " + std::to_string(theta));
    const double overlap = dot(u.components(), v.components());
    if (!(std::abs(overlap) <= kOrthogonalityTolerance))
        detail::fail(ErrorClass::usage, "not-orthogonal",
                     "tangent is not orthogonal to the reference (|<u,v>| = " + std::to_string(std::abs(overlap)) + ")");
    const double c = std::cos(theta), s = std::sin(theta);
    std::vector<double> out(v.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * v[i] + s * u[i];
    return UnitVector::from_components(std::move(out));
}

struct CosineDraw {
    double cosine;
    double angle;
};

/// s ~ U[lb, 1], theta = acos(s). s is clamped to [-1, 1] before acos.
inline CosineDraw sample_cosine(const ConeSpec& cone, RandomStream& rng) {
    const double lb = cone.lower_bound();
    const double s = lb + (1.0 - lb) * rng.uniform01();
    return {s, std::acos(std::clamp(s, -1.0, 1.0))};
}

/// Draws the cosine first, then the tangent, in that stream order.
inline PerturbationDraw draw_perturbation(const UnitVector& v, const ConeSpec& cone, RandomStream& rng) {
    const auto [s, theta] = sample_cosine(cone, rng);
    return {s, theta, sample_tangent(v, rng)};
}

/// max(lb, max_{j != i} cos(angle(v_i, v_j) / 2)). Since cos(x/2) falls
/// with x, the inner max is attained at the nearest neighbour, and
/// cos(acos(c) / 2) = sqrt((1 + c) / 2).
inline ConeSpec adjusted_lower_bound(std::size_t i, const IdentitySet& set, const ConeSpec& base) {
    const auto nn = set.nn_cos(i);
    if (!nn) return base;
    const double c = std::clamp(*nn, -1.0, 1.0);
    const double half = std::sqrt((1.0 + c) / 2.0);
    return ConeSpec(std::clamp(std::max(base.lower_bound(), half), 0.0, 1.0));
}

/// K perturbations of v inside the cap, without any overlap adjustment.
inline std::vector<UnitVector> perturb_within_cone(const UnitVector& v, const ConeSpec& cone, std::size_t k,
                                                   RandomStream& rng) {
    if (k < 1) detail::fail(ErrorClass::usage, "invalid-sample-count", "need at least one sample per identity");
    std::vector<UnitVector> out;
    out.reserve(k);
    for (std::size_t n = 0; n < k; ++n) {
        auto draw = draw_perturbation(v, cone, rng);
        out.push_back(rotate_toward(v, draw.tangent, draw.angle));
    }
    return out;
}

/// The full sampler for identity i: adjust the bound against the rest of the
/// set, then draw K samples in its cap.
inline std::vector<UnitVector> perturb_identity(std::size_t i, const IdentitySet& set, const ConeSpec& base,
                                                std::size_t k, RandomStream& rng) {
    return perturb_within_cone(set.vector(i), adjusted_lower_bound(i, set, base), k, rng);
}

/// Euclidean baseline with caller-supplied noise: normalize(v + sigma * eps).
inline UnitVector noise_perturb_with(const UnitVector& v, double sigma, std::span<const double> eps) {
    if (!(sigma > 0.0 && std::isfinite(sigma))) detail::fail(ErrorClass::usage, "invalid-sigma", "sigma must be finite and > 0");
    if (eps.size() != v.dim()) detail::fail(ErrorClass::usage, "dimension-mismatch", "noise and vector differ in dimension");
    std::vector<double> out(v.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] + sigma * eps[i];
    return normalize(out);
}

/// Euclidean baseline: v + N(0, sigma^2 I), renormalized. No angular bound.
inline UnitVector noise_perturb(const UnitVector& v, double sigma, RandomStream& rng) {
    if (!(sigma > 0.0 && std::isfinite(sigma))) detail::fail(ErrorClass::usage, "invalid-sigma", "sigma must be finite and > 0");
    std::vector<double> eps(v.dim()), sum(v.dim());
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        for (double& x : eps) x = rng.normal();
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = v[i] + sigma * eps[i];
        if (norm(sum) >= kTangentResidualFloor) return normalize(sum);
    }
    detail::fail(ErrorClass::internal, "noise-redraw-exhausted", "16 consecutive noise draws cancelled the reference");
}

/// (1 + omega) * cond - omega * uncond, componentwise, evaluated as
/// cond + omega * (cond - uncond). In this form omega = 0 and cond == uncond
/// both return cond bit for bit.
inline NoisePrediction cfg_combine(const NoisePrediction& cond, const NoisePrediction& uncond, const GuidanceScale& scale) {
    if (cond.size() != uncond.size())
        detail::fail(ErrorClass::usage, "length-mismatch", "conditional and unconditional predictions differ in length");
    const double w = scale.omega();
    if (w == 0.0) return cond;
    std::vector<double> out(cond.size());
    const auto c = cond.values(), u = uncond.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c[i] + w * (c[i] - u[i]);
    return NoisePrediction(std::move(out));
}

/// Mean angle of the cap sampler: E[acos s] for s ~ U[lb, 1], which is
/// (sqrt(1 - lb^2) - lb * acos(lb)) / (1 - lb), and 0 at lb = 1.
inline double mean_cap_angle(const ConeSpec& cone) {
    const double lb = cone.lower_bound();
    if (lb >= 1.0) return 0.0;
    return (std::sqrt(1.0 - lb * lb) - lb * std::acos(lb)) / (1.0 - lb);
}

/// Sigma for which the Euclidean baseline's mean angular deviation in
/// dimension d equals `target_angle`, estimated by bisection over a fixed
/// Monte Carlo sample (common random numbers keep the estimate monotone).
/// The angle of normalize(v + sigma eps) is atan2(sigma R, 1 + sigma Z) with
/// Z ~ N(0,1) and R ~ chi_{d-1}.
inline double calibrate_noise_sigma(std::size_t d, double target_angle, std::size_t samples = 20000,
                                    std::uint64_t seed = 1337) {
    UnitVector::check_dimension(d);
    if (!(target_angle > 0.0 && target_angle < std::numbers::pi / 2))
        detail::fail(ErrorClass::usage, "invalid-target-angle", "target angle must lie in (0, pi/2)");
    RandomStream rng(seed);
    std::vector<double> z(samples), r(samples);
    for (std::size_t n = 0; n < samples; ++n) {
        z[n] = rng.normal();
        double sq = 0.0;
        for (std::size_t k = 1; k < d; ++k) {
            const double g = rng.normal();
            sq += g * g;
        }
        r[n] = std::sqrt(sq);
    }
    auto mean_angle = [&](double sigma) {
        double acc = 0.0;
        for (std::size_t n = 0; n < samples; ++n) acc += std::atan2(sigma * r[n], 1.0 + sigma * z[n]);
        return acc / static_cast<double>(samples);
    };
    double lo = 0.0, hi = 1.0;
    while (mean_angle(hi) < target_angle) hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_angle(mid) < target_angle ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace cone_sampler
