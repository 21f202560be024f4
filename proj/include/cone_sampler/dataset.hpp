#pragma once

// Synthetic labeled datasets at the embedding level.
//
// Each identity i of a reference set yields K samples: angular perturbations
// of v_i (overlap-adjusted cap), each passed through an observation model
// that stands in for "render an image, re-embed it with a recognition model"
// as a second, small angular jitter.
//
// Random substreams: identity i draws its perturbations from
// substream_seed(base_seed, i, 0) and its observation jitter from
// substream_seed(base_seed, i, 1) (see random.hpp). Output never depends on
// the number of worker threads.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cone_sampler/embedding_set.hpp"
#include "cone_sampler/error.hpp"
#include "cone_sampler/geometry.hpp"
#include "cone_sampler/metrics.hpp"
#include "cone_sampler/parallel.hpp"
#include "cone_sampler/random.hpp"

namespace cone_sampler {

struct GenerationConfig {
    ConeSpec lb{0.6};
    std::size_t samples_per_identity = 50;
    std::uint64_t base_seed = 1337;
    std::size_t dimension = 512;
    /// Cosine lower bound of the observation jitter; 1 disables it.
    double observation_cone = 0.95;
    /// Raise each identity's bound against its nearest neighbour. Turning it
    /// off samples the raw cap and gives up the nearest-identity guarantee.
    bool overlap_guard = true;

    void validate() const {
        if (samples_per_identity < 1)
            detail::fail(ErrorClass::usage, "invalid-sample-count", "samples per identity must be >= 1");
        UnitVector::check_dimension(dimension);
        if (!(observation_cone > 0.0 && observation_cone <= 1.0))
            detail::fail(ErrorClass::usage, "invalid-observation-cone", "observation cone must lie in (0, 1]");
    }
};

/// C uniform unit vectors with every pairwise cosine <= max_pairwise_cos,
/// by rejection. Fails after 1000*C consecutive rejections.
inline IdentitySet generate_reference_set(std::size_t count, std::size_t dim, double max_pairwise_cos, RandomStream& rng) {
    if (count < 1) detail::fail(ErrorClass::usage, "invalid-identity-count", "need at least one identity");
    UnitVector::check_dimension(dim);
    if (!(max_pairwise_cos >= -1.0 && max_pairwise_cos < 1.0))
        detail::fail(ErrorClass::usage, "invalid-max-cos", "max pairwise cosine must lie in [-1, 1)");

    // Candidates are drawn in batches so the accepted set is streamed once
    // per batch rather than once per candidate. They are still drawn and
    // judged in the order a one-at-a-time loop would use, so the result is
    // the same; surplus draws after the last acceptance are discarded.
    constexpr std::size_t kBatch = 64;
    IdentitySet set(dim);
    std::vector<double> batch(kBatch * dim);
    std::vector<double> batch_dots;  // [accepted-before-batch][candidate]
    std::vector<double> dots;
    dots.reserve(count);
    const std::size_t limit = 1000 * count;
    std::size_t rejections = 0;
    while (set.size() < count) {
        for (std::size_t b = 0; b < kBatch; ++b) {
            std::span<double> candidate(batch.data() + b * dim, dim);
            double len = 0.0;
            do {
                for (double& x : candidate) x = rng.normal();
                len = norm(candidate);
            } while (!(len > 0.0));
            for (double& x : candidate) x /= len;
        }
        const std::size_t before = set.size();
        batch_dots.resize(before * kBatch);
        for (std::size_t j = 0; j < before; ++j) {
            const auto v = set.vectors()[j].components();
            for (std::size_t b = 0; b < kBatch; ++b)
                batch_dots[j * kBatch + b] = dot(std::span<const double>(batch.data() + b * dim, dim), v);
        }
        for (std::size_t b = 0; b < kBatch && set.size() < count; ++b) {
            std::span<const double> candidate(batch.data() + b * dim, dim);
            dots.clear();
            bool ok = true;
            for (std::size_t j = 0; j < set.size(); ++j) {
                const double c = j < before ? batch_dots[j * kBatch + b] : dot(candidate, set.vectors()[j].components());
                if (c > max_pairwise_cos) {
                    ok = false;
                    break;
                }
                dots.push_back(c);
            }
            if (!ok) {
                if (++rejections >= limit)
                    detail::fail(ErrorClass::infeasible, "reference-set-infeasible",
                                 "placed " + std::to_string(set.size()) + " of " + std::to_string(count) + " identities in d=" +
                                     std::to_string(dim) + " but " + std::to_string(limit) +
                                     " consecutive candidates violated max pairwise cosine " +
                                     std::to_string(max_pairwise_cos) + "; the cap is too tight for this dimension and count");
                continue;
            }
            rejections = 0;
            set.insert_with_dots(UnitVector::from_components(std::vector<double>(candidate.begin(), candidate.end())), static_cast<std::int64_t>(set.size()), dots);
        }
    }
    return set;
}

/// Observation jitter: a uniform-in-cosine draw in the cap of width
/// `observation_cone` around e. 1 returns e untouched.
inline UnitVector observe(const UnitVector& e, double observation_cone, RandomStream& rng) {
    if (!(observation_cone > 0.0 && observation_cone <= 1.0))
        detail::fail(ErrorClass::usage, "invalid-observation-cone", "observation cone must lie in (0, 1]");
    if (observation_cone == 1.0) return e;
    auto draw = draw_perturbation(e, ConeSpec(observation_cone), rng);
    return rotate_toward(e, draw.tangent, draw.angle);
}

/// All K samples of identity i, perturbation then observation.
inline std::vector<UnitVector> generate_identity_samples(std::size_t i, const IdentitySet& set, const GenerationConfig& cfg) {
    RandomStream perturb_rng(substream_seed(cfg.base_seed, i, 0));
    auto samples = cfg.overlap_guard ? perturb_identity(i, set, cfg.lb, cfg.samples_per_identity, perturb_rng)
                                     : perturb_within_cone(set.vector(i), cfg.lb, cfg.samples_per_identity, perturb_rng);
    if (cfg.observation_cone < 1.0) {
        RandomStream observe_rng(substream_seed(cfg.base_seed, i, 1));
        for (auto& s : samples) s = observe(s, cfg.observation_cone, observe_rng);
    }
    return samples;
}

/// Rows for identities [first, first + count), K each, label = identity index.
struct DatasetBlock {
    std::size_t first_identity;
    std::size_t identity_count;
    std::size_t dim;
    std::vector<double> data;
    std::vector<std::int64_t> labels;
};

/// Generates the dataset in blocks of `block_identities` identities and hands
/// each block to `sink` in identity order, from the calling thread. Peak
/// memory is one block.
inline void generate_dataset_blocks(const IdentitySet& set, const GenerationConfig& cfg,
                                    const std::function<void(const DatasetBlock&)>& sink, unsigned threads = 0,
                                    std::size_t block_identities = 256) {
    cfg.validate();
    if (set.dim() != cfg.dimension)
        detail::fail(ErrorClass::usage, "dimension-mismatch",
                     "reference set has d=" + std::to_string(set.dim()) + " but config says d=" + std::to_string(cfg.dimension));
    const std::size_t k = cfg.samples_per_identity, d = set.dim();
    block_identities = std::max<std::size_t>(1, block_identities);
    for (std::size_t first = 0; first < set.size(); first += block_identities) {
        const std::size_t count = std::min(block_identities, set.size() - first);
        DatasetBlock block{first, count, d, std::vector<double>(count * k * d), std::vector<std::int64_t>(count * k)};
        parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t b = begin; b < end; ++b) {
                const auto samples = generate_identity_samples(first + b, set, cfg);
                for (std::size_t s = 0; s < k; ++s) {
                    const auto c = samples[s].components();
                    std::copy(c.begin(), c.end(), block.data.begin() + static_cast<std::ptrdiff_t>(((b * k) + s) * d));
                    block.labels[b * k + s] = static_cast<std::int64_t>(first + b);
                }
            }
        });
        sink(block);
    }
}

inline LabeledEmbeddingSet generate_dataset(const IdentitySet& set, const GenerationConfig& cfg, unsigned threads = 0) {
    std::vector<double> data;
    std::vector<std::int64_t> labels;
    data.reserve(set.size() * cfg.samples_per_identity * set.dim());
    labels.reserve(set.size() * cfg.samples_per_identity);
    generate_dataset_blocks(
        set, cfg,
        [&](const DatasetBlock& b) {
            data.insert(data.end(), b.data.begin(), b.data.end());
            labels.insert(labels.end(), b.labels.begin(), b.labels.end());
        },
        threads);
    return LabeledEmbeddingSet(set.dim(), std::move(data), std::move(labels), set.size());
}

struct SweepPoint {
    double setting;
    VerificationReport report;
};

/// One report per setting, settings ascending and distinct.
struct SweepResult {
    std::vector<SweepPoint> points;
};

/// Generates and evaluates one dataset per lb. The same base seed is used for
/// every setting so only lb changes between points. Pairing defaults to all
/// genuine pairs and `impostor_mult` times as many sampled impostor pairs.
inline SweepResult run_lb_sweep(const IdentitySet& set, const GenerationConfig& cfg, std::vector<double> lbs,
                                std::size_t impostor_mult = 10, unsigned threads = 0) {
    if (lbs.empty()) detail::fail(ErrorClass::usage, "empty-sweep", "need at least one lower bound");
    std::sort(lbs.begin(), lbs.end());
    if (std::adjacent_find(lbs.begin(), lbs.end()) != lbs.end())
        detail::fail(ErrorClass::usage, "duplicate-setting", "sweep settings must be distinct");
    SweepResult result;
    for (double lb : lbs) {
        GenerationConfig point_cfg = cfg;
        point_cfg.lb = ConeSpec(lb);
        const auto data = generate_dataset(set, point_cfg, threads);
        const auto scores = build_score_set(data, default_pairing(data, impostor_mult, cfg.base_seed), threads);
        result.points.push_back({lb, verification_report(scores)});
    }
    return result;
}

}  // namespace cone_sampler
