#pragma once

// Hand-rolled generators for randomized tests. All driven by an explicit
// seed so a failing instance can be replayed.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cone_sampler/cone_sampler.hpp"

namespace gen {

using cone_sampler::RandomStream;

inline std::vector<double> gaussian(RandomStream& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    return v;
}

inline cone_sampler::UnitVector unit(RandomStream& rng, std::size_t d) { return cone_sampler::normalize(gaussian(rng, d)); }

/// Scores either continuous or snapped to a coarse grid so that ties
/// between and within the two sides are common.
inline std::vector<double> scores(RandomStream& rng, std::size_t n, double mean, double sd, bool tied) {
    std::vector<double> out(n);
    for (double& s : out) {
        s = mean + sd * rng.normal();
        if (tied) s = std::round(s * 16.0) / 16.0;
    }
    return out;
}

/// Random genuine/impostor score set with at most `max_total` scores.
inline cone_sampler::ScoreSet score_set(RandomStream& rng, std::size_t max_total) {
    const std::size_t n = 1 + rng.below(max_total / 2);
    const std::size_t m = 1 + rng.below(max_total / 2);
    const bool tied = rng.below(2) == 0;
    const double separation = rng.uniform(0.0, 1.0);
    return {scores(rng, n, 0.2 + separation, 0.15, tied), scores(rng, m, 0.2, 0.15, tied)};
}

struct Labeled {
    std::size_t dim;
    std::vector<double> data;
    std::vector<std::int64_t> labels;

    cone_sampler::LabeledEmbeddingSet set() const { return cone_sampler::LabeledEmbeddingSet(dim, data, labels); }
};

/// Up to `max_classes` classes of clustered unit vectors, rows shuffled so
/// labels are not contiguous. Label values are sparse.
inline Labeled labeled(RandomStream& rng, std::size_t max_classes, std::size_t max_members, std::size_t max_dim) {
    Labeled out;
    out.dim = 2 + rng.below(max_dim - 1);
    const std::size_t classes = 1 + rng.below(max_classes);
    std::vector<std::pair<std::int64_t, std::vector<double>>> rows;
    for (std::size_t c = 0; c < classes; ++c) {
        const auto center = gaussian(rng, out.dim);
        const double spread = rng.uniform(0.05, 2.0);
        const std::size_t members = 1 + rng.below(max_members);
        const std::int64_t label = static_cast<std::int64_t>(3 * c + rng.below(3));
        for (std::size_t k = 0; k < members; ++k) {
            std::vector<double> x(out.dim);
            for (std::size_t j = 0; j < out.dim; ++j) x[j] = center[j] + spread * rng.normal();
            const auto u = cone_sampler::normalize(x);
            rows.emplace_back(label, std::vector<double>(u.components().begin(), u.components().end()));
        }
    }
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
    for (auto& [label, x] : rows) {
        out.labels.push_back(label);
        out.data.insert(out.data.end(), x.begin(), x.end());
    }
    return out;
}

inline std::vector<std::string> categories(RandomStream& rng, std::size_t n) {
    static const char* names[] = {"neutral", "happy", "sad", "surprise", "anger", "fear"};
    const std::size_t alphabet = 1 + rng.below(6);
    std::vector<std::string> out(n);
    for (auto& s : out) s = names[rng.below(alphabet)];
    return out;
}

inline std::vector<double> continuous(RandomStream& rng, std::size_t n) {
    std::vector<double> out(n);
    for (double& x : out) x = rng.uniform(0.0, 100.0);
    return out;
}

}  // namespace gen
