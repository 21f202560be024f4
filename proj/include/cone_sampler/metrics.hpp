#pragma once

// Identity-separability and intra-class diversity/consistency metrics.
//
// Conventions (fixed, golden values depend on them):
//   * a pair is accepted when score >= threshold, so
//     FMR(t) = #{impostor >= t} / |I| and FNMR(t) = #{genuine < t} / |G|;
//   * thresholds range over the merged score support;
//   * EER is (FMR + FNMR) / 2 at the lowest threshold minimizing |FMR - FNMR|;
//   * standard deviations use the population convention (divide by n);
//   * undefined metrics are std::nullopt plus a flag, never NaN.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cone_sampler/embedding_set.hpp"
#include "cone_sampler/error.hpp"
#include "cone_sampler/parallel.hpp"
#include "cone_sampler/random.hpp"
#include "cone_sampler/vector_ops.hpp"

namespace cone_sampler {

struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

struct DistributionStats {
    std::optional<double> g_mean, g_std, i_mean, i_std;
};

struct VerificationReport {
    std::optional<double> eer;
    std::optional<double> fmr100;
    DistributionStats stats;
    std::optional<double> fdr;
    std::size_t genuine_pairs = 0;
    std::size_t impostor_pairs = 0;
    std::vector<std::string> flags;
};

struct PairSelection {
    enum class Mode { all_pairs, sampled };
    Mode mode = Mode::all_pairs;
    std::size_t count = 0;  // sampled mode only
    std::uint64_t seed = 1337;

    static PairSelection all() { return {}; }
    static PairSelection sampled(std::size_t n, std::uint64_t seed) {
        if (n < 1) detail::fail(ErrorClass::usage, "invalid-pair-count", "sampled pair count must be >= 1");
        return {Mode::sampled, n, seed};
    }
};

struct PairingPolicy {
    PairSelection genuine = PairSelection::all();
    PairSelection impostor = PairSelection::sampled(1, 1337);
};

/// Number of unordered same-label pairs, sum over classes of M(M-1)/2.
inline std::size_t genuine_pair_count(const LabeledEmbeddingSet& data) {
    std::size_t total = 0;
    for (const auto& g : group_by_label(data.labels())) total += g.members.size() * (g.members.size() - 1) / 2;
    return total;
}

/// All genuine pairs; impostor pairs sampled to `impostor_mult` times the
/// genuine count (at least one).
inline PairingPolicy default_pairing(const LabeledEmbeddingSet& data, std::size_t impostor_mult = 10,
                                     std::uint64_t seed = 1337) {
    const std::size_t n = std::max<std::size_t>(1, impostor_mult * genuine_pair_count(data));
    return {PairSelection::all(), PairSelection::sampled(n, seed)};
}

namespace detail {

struct PairList {
    std::vector<std::uint32_t> a, b;
    void push(std::size_t i, std::size_t j) {
        a.push_back(static_cast<std::uint32_t>(i));
        b.push_back(static_cast<std::uint32_t>(j));
    }
};

inline std::vector<double> score_pairs(const LabeledEmbeddingSet& data, const PairList& pairs, unsigned threads) {
    std::vector<double> out(pairs.a.size());
    parallel_for(out.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) out[k] = dot(data.row(pairs.a[k]), data.row(pairs.b[k]));
    });
    return out;
}

inline PairList genuine_pairs(const LabeledEmbeddingSet& data, const std::vector<ClassGroup>& groups,
                              const PairSelection& sel) {
    PairList pairs;
    if (sel.mode == PairSelection::Mode::all_pairs) {
        for (const auto& g : groups)
            for (std::size_t j = 0; j < g.members.size(); ++j)
                for (std::size_t l = j + 1; l < g.members.size(); ++l) pairs.push(g.members[j], g.members[l]);
        return pairs;
    }
    // Sampled: first member uniform over samples whose class has a partner,
    // second uniform over the other members of that class.
    std::vector<std::size_t> eligible, group_of(data.size()), position(data.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
        for (std::size_t p = 0; p < groups[gi].members.size(); ++p) {
            group_of[groups[gi].members[p]] = gi;
            position[groups[gi].members[p]] = p;
            if (groups[gi].members.size() >= 2) eligible.push_back(groups[gi].members[p]);
        }
    if (eligible.empty()) return pairs;
    std::sort(eligible.begin(), eligible.end());
    RandomStream rng(sel.seed);
    for (std::size_t k = 0; k < sel.count; ++k) {
        const std::size_t first = eligible[rng.below(eligible.size())];
        const auto& members = groups[group_of[first]].members;
        std::size_t other = rng.below(members.size() - 1);
        if (other >= position[first]) ++other;
        pairs.push(first, members[other]);
    }
    return pairs;
}

inline PairList impostor_pairs(const LabeledEmbeddingSet& data, std::size_t class_groups, const PairSelection& sel) {
    PairList pairs;
    if (class_groups < 2) return pairs;
    const std::size_t n = data.size();
    if (sel.mode == PairSelection::Mode::all_pairs) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (data.label(i) != data.label(j)) pairs.push(i, j);
        return pairs;
    }
    RandomStream rng(sel.seed);
    pairs.a.reserve(sel.count);
    pairs.b.reserve(sel.count);
    while (pairs.a.size() < sel.count) {
        const std::size_t i = rng.below(n), j = rng.below(n);
        if (data.label(i) != data.label(j)) pairs.push(i, j);
    }
    return pairs;
}

}  // namespace detail

/// Cosine scores for same-label (genuine) and cross-label (impostor) pairs.
/// With fewer than two classes the impostor side is empty.
inline ScoreSet build_score_set(const LabeledEmbeddingSet& data, const PairingPolicy& policy, unsigned threads = 0) {
    if (data.size() > std::numeric_limits<std::uint32_t>::max())
        detail::fail(ErrorClass::usage, "dataset-too-large", "pair indices are 32-bit");
    const auto groups = group_by_label(data.labels());
    ScoreSet scores;
    scores.genuine = detail::score_pairs(data, detail::genuine_pairs(data, groups, policy.genuine), threads);
    scores.impostor = detail::score_pairs(data, detail::impostor_pairs(data, groups.size(), policy.impostor), threads);
    return scores;
}

namespace detail {

/// Sorted copies plus the ascending distinct merged support.
struct SortedScores {
    std::vector<double> genuine, impostor, thresholds;

    explicit SortedScores(const ScoreSet& s) : genuine(s.genuine), impostor(s.impostor) {
        std::sort(genuine.begin(), genuine.end());
        std::sort(impostor.begin(), impostor.end());
        thresholds.resize(genuine.size() + impostor.size());
        std::merge(genuine.begin(), genuine.end(), impostor.begin(), impostor.end(), thresholds.begin());
        thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    }

    /// Calls visit(false_non_matches, false_matches) for each threshold in
    /// ascending order; stops early when visit returns true.
    template <class Visit>
    void sweep(Visit&& visit) const {
        std::size_t g = 0, i = 0;  // counts strictly below the threshold
        for (double t : thresholds) {
            while (g < genuine.size() && genuine[g] < t) ++g;
            while (i < impostor.size() && impostor[i] < t) ++i;
            if (visit(g, impostor.size() - i)) return;
        }
    }
};

}  // namespace detail

inline std::optional<double> compute_eer(const ScoreSet& scores) {
    if (scores.genuine.empty() || scores.impostor.empty()) return std::nullopt;
    const detail::SortedScores sorted(scores);
    const auto n = static_cast<unsigned __int128>(sorted.genuine.size());
    const auto m = static_cast<unsigned __int128>(sorted.impostor.size());
    // |FMR - FNMR| compared exactly as |fm * n - fnm * m| / (n m).
    bool have = false;
    unsigned __int128 best_gap = 0;
    std::size_t best_fnm = 0, best_fm = 0;
    sorted.sweep([&](std::size_t fnm, std::size_t fm) {
        const unsigned __int128 x = fm * n, y = fnm * m;
        const unsigned __int128 gap = x > y ? x - y : y - x;
        if (!have || gap < best_gap) {
            have = true;
            best_gap = gap;
            best_fnm = fnm;
            best_fm = fm;
        }
        return false;
    });
    const double fmr = static_cast<double>(best_fm) / static_cast<double>(sorted.impostor.size());
    const double fnmr = static_cast<double>(best_fnm) / static_cast<double>(sorted.genuine.size());
    return (fmr + fnmr) / 2.0;
}

struct Fmr100 {
    double fnmr;              // lowest FNMR with FMR <= 1%
    bool target_met = true;   // false: no threshold reaches FMR <= 1%; fnmr is at the strictest threshold
    bool low_impostor_count;  // fewer than 100 impostor scores
};

inline std::optional<Fmr100> compute_fmr100(const ScoreSet& scores) {
    if (scores.genuine.empty() || scores.impostor.empty()) return std::nullopt;
    const detail::SortedScores sorted(scores);
    const std::size_t n = sorted.genuine.size(), m = sorted.impostor.size();
    std::optional<std::size_t> found;
    std::size_t last_fnm = 0;
    // FNMR rises with the threshold, so the first threshold meeting the FMR
    // target gives the minimum.
    sorted.sweep([&](std::size_t fnm, std::size_t fm) {
        last_fnm = fnm;
        if (fm * 100 <= m) {
            found = fnm;
            return true;
        }
        return false;
    });
    Fmr100 out{static_cast<double>(found.value_or(last_fnm)) / static_cast<double>(n), found.has_value(), m < 100};
    return out;
}

/// Means and population standard deviations (Welford, single pass).
inline DistributionStats score_stats(const ScoreSet& scores) {
    auto moments = [](const std::vector<double>& xs, std::optional<double>& mean, std::optional<double>& sd) {
        if (xs.empty()) return;
        double mu = 0.0, m2 = 0.0;
        std::size_t k = 0;
        for (double x : xs) {
            ++k;
            const double delta = x - mu;
            mu += delta / static_cast<double>(k);
            m2 += delta * (x - mu);
        }
        mean = mu;
        sd = std::sqrt(std::max(0.0, m2 / static_cast<double>(k)));
    };
    DistributionStats st;
    moments(scores.genuine, st.g_mean, st.g_std);
    moments(scores.impostor, st.i_mean, st.i_std);
    return st;
}

/// Fisher discriminant ratio (mu_G - mu_I)^2 / (sigma_G^2 + sigma_I^2).
inline std::optional<double> compute_fdr(const DistributionStats& s) {
    if (!s.g_mean || !s.g_std || !s.i_mean || !s.i_std) return std::nullopt;
    const double denom = *s.g_std * *s.g_std + *s.i_std * *s.i_std;
    if (!(denom > 0.0)) return std::nullopt;
    const double diff = *s.g_mean - *s.i_mean;
    return diff * diff / denom;
}

inline VerificationReport verification_report(const ScoreSet& scores) {
    VerificationReport r;
    r.genuine_pairs = scores.genuine.size();
    r.impostor_pairs = scores.impostor.size();
    if (scores.genuine.empty()) r.flags.emplace_back("genuine-scores-empty");
    if (scores.impostor.empty()) r.flags.emplace_back("impostor-scores-empty");
    r.eer = compute_eer(scores);
    if (!r.eer) r.flags.emplace_back("eer-undefined");
    if (auto f = compute_fmr100(scores)) {
        r.fmr100 = f->fnmr;
        if (!f->target_met) r.flags.emplace_back("fmr100-target-unreachable");
        if (f->low_impostor_count) r.flags.emplace_back("fmr100-low-impostor-count");
    } else {
        r.flags.emplace_back("fmr100-undefined");
    }
    r.stats = score_stats(scores);
    r.fdr = compute_fdr(r.stats);
    if (!r.fdr) r.flags.emplace_back("fdr-undefined");
    return r;
}

/// A per-class statistic averaged uniformly over the classes it is defined
/// for. Classes that had to be skipped are listed in `excluded`.
struct ClassAverage {
    std::optional<double> value;
    std::size_t classes_used = 0;
    std::vector<std::int64_t> excluded;
};

namespace detail {

template <class PerClass>
ClassAverage average_over_classes(const std::vector<ClassGroup>& groups, PerClass&& per_class) {
    ClassAverage out;
    double acc = 0.0;
    for (const auto& g : groups) {
        if (auto v = per_class(g)) {
            acc += *v;
            ++out.classes_used;
        } else {
            out.excluded.push_back(g.label);
        }
    }
    if (out.classes_used > 0) out.value = acc / static_cast<double>(out.classes_used);
    return out;
}

}  // namespace detail

/// Fraction of each class whose cosine to the (unnormalized) class mean is at
/// least r, averaged over classes. Classes with a zero-norm mean are excluded.
inline ClassAverage intra_class_consistency(const LabeledEmbeddingSet& data, double r = 0.3) {
    const std::size_t d = data.dim();
    return detail::average_over_classes(group_by_label(data.labels()), [&](const ClassGroup& g) -> std::optional<double> {
        std::vector<double> center(d, 0.0);
        for (auto idx : g.members) {
            const auto x = data.row(idx);
            for (std::size_t k = 0; k < d; ++k) center[k] += x[k];
        }
        for (double& c : center) c /= static_cast<double>(g.members.size());
        const double center_norm = norm(center);
        if (!(center_norm > 0.0)) return std::nullopt;
        std::size_t close = 0;
        for (auto idx : g.members) {
            const auto x = data.row(idx);
            if (dot(x, center) / (norm(x) * center_norm) >= r) ++close;
        }
        return static_cast<double>(close) / static_cast<double>(g.members.size());
    });
}

struct CosineDistance {
    double operator()(std::span<const double> a, std::span<const double> b) const { return 1.0 - cosine(a, b); }
};

/// Mean pairwise dissimilarity within each class, averaged over classes.
/// Classes with fewer than two members are excluded.
template <class Dissimilarity = CosineDistance>
ClassAverage intra_class_diversity(const LabeledEmbeddingSet& data, Dissimilarity dissimilarity = {}) {
    return detail::average_over_classes(group_by_label(data.labels()), [&](const ClassGroup& g) -> std::optional<double> {
        const std::size_t m = g.members.size();
        if (m < 2) return std::nullopt;
        double acc = 0.0;
        for (std::size_t j = 0; j + 1 < m; ++j)
            for (std::size_t l = j + 1; l < m; ++l) acc += dissimilarity(data.row(g.members[j]), data.row(g.members[l]));
        return 2.0 * acc / (static_cast<double>(m) * static_cast<double>(m - 1));
    });
}

// ---- attribute statistics -------------------------------------------------

struct AttributeChannel {
    std::string name;
    std::variant<std::vector<std::string>, std::vector<double>> values;

    bool continuous() const noexcept { return std::holds_alternative<std::vector<double>>(values); }
    std::size_t size() const noexcept {
        return std::visit([](const auto& v) { return v.size(); }, values);
    }
};

/// Per-sample attributes aligned by index with a LabeledEmbeddingSet.
class AttributeTable {
public:
    void add(AttributeChannel channel) {
        if (!channels_.empty() && channel.size() != rows())
            detail::fail(ErrorClass::input_format, "attribute-misaligned", "attribute channels differ in length");
        for (const auto& c : channels_)
            if (c.name == channel.name)
                detail::fail(ErrorClass::input_format, "duplicate-channel", "attribute channel '" + channel.name + "' repeated");
        channels_.push_back(std::move(channel));
    }
    void add_discrete(std::string name, std::vector<std::string> values) { add({std::move(name), std::move(values)}); }
    void add_continuous(std::string name, std::vector<double> values) { add({std::move(name), std::move(values)}); }

    std::size_t rows() const noexcept { return channels_.empty() ? 0 : channels_.front().size(); }
    const std::vector<AttributeChannel>& channels() const noexcept { return channels_; }

    const AttributeChannel& channel(const std::string& name) const {
        for (const auto& c : channels_)
            if (c.name == name) return c;
        detail::fail(ErrorClass::usage, "unknown-channel", "no attribute channel named '" + name + "'");
    }

private:
    std::vector<AttributeChannel> channels_;
};

/// Uniform bins over [lo, hi]; out-of-range values land in the edge bins.
struct Binning {
    double lo, hi;
    std::size_t bins;

    Binning(double lo_, double hi_, std::size_t bins_) : lo(lo_), hi(hi_), bins(bins_) {
        if (bins < 1) detail::fail(ErrorClass::usage, "invalid-bins", "need at least one bin");
        if (!(lo < hi)) detail::fail(ErrorClass::usage, "invalid-range", "bin range needs lo < hi");
    }

    std::size_t index(double v) const noexcept {
        const double pos = std::floor((v - lo) / (hi - lo) * static_cast<double>(bins));
        if (!(pos >= 0.0)) return 0;
        if (pos >= static_cast<double>(bins)) return bins - 1;
        return static_cast<std::size_t>(pos);
    }
    double edge(std::size_t i) const noexcept { return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins); }
};

namespace detail {

inline void check_aligned(const LabeledEmbeddingSet& data, const AttributeTable& attrs) {
    if (attrs.rows() != data.size())
        fail(ErrorClass::input_format, "attribute-misaligned",
             "attribute table has " + std::to_string(attrs.rows()) + " rows for " + std::to_string(data.size()) + " samples");
}

}  // namespace detail

/// Shannon entropy (nats) of a channel's empirical distribution inside each
/// class, averaged over classes. Continuous channels need a binning.
inline ClassAverage attribute_entropy(const LabeledEmbeddingSet& data, const AttributeTable& attrs,
                                      const std::string& channel, const std::optional<Binning>& bins = std::nullopt) {
    detail::check_aligned(data, attrs);
    const auto& ch = attrs.channel(channel);
    if (ch.continuous() && !bins)
        detail::fail(ErrorClass::usage, "binning-required", "continuous channel '" + channel + "' needs a binning for entropy");
    return detail::average_over_classes(group_by_label(data.labels()), [&](const ClassGroup& g) -> std::optional<double> {
        std::map<std::string, std::size_t> discrete;
        std::map<std::size_t, std::size_t> binned;
        for (auto idx : g.members) {
            if (ch.continuous())
                ++binned[bins->index(std::get<std::vector<double>>(ch.values)[idx])];
            else
                ++discrete[std::get<std::vector<std::string>>(ch.values)[idx]];
        }
        const double m = static_cast<double>(g.members.size());
        double h = 0.0;
        auto add = [&](std::size_t count) {
            const double p = static_cast<double>(count) / m;
            h -= p * std::log(p);
        };
        for (const auto& [k, c] : discrete) add(c);
        for (const auto& [k, c] : binned) add(c);
        return h + 0.0;  // normalizes -0.0
    });
}

/// Population standard deviation of a continuous channel within each class,
/// averaged over classes.
inline ClassAverage attribute_std(const LabeledEmbeddingSet& data, const AttributeTable& attrs, const std::string& channel) {
    detail::check_aligned(data, attrs);
    const auto& ch = attrs.channel(channel);
    if (!ch.continuous())
        detail::fail(ErrorClass::usage, "channel-not-continuous", "channel '" + channel + "' is discrete");
    const auto& values = std::get<std::vector<double>>(ch.values);
    return detail::average_over_classes(group_by_label(data.labels()), [&](const ClassGroup& g) -> std::optional<double> {
        double mean = 0.0;
        for (auto idx : g.members) mean += values[idx];
        mean /= static_cast<double>(g.members.size());
        double ss = 0.0;
        for (auto idx : g.members) ss += (values[idx] - mean) * (values[idx] - mean);
        return std::sqrt(ss / static_cast<double>(g.members.size()));
    });
}

struct ChannelStd {
    std::string channel;
    ClassAverage value;
};

/// attribute_std for every continuous channel, in table order.
inline std::vector<ChannelStd> attribute_std(const LabeledEmbeddingSet& data, const AttributeTable& attrs) {
    std::vector<ChannelStd> out;
    for (const auto& ch : attrs.channels())
        if (ch.continuous()) out.push_back({ch.name, attribute_std(data, attrs, ch.name)});
    return out;
}

// ---- histograms -----------------------------------------------------------

struct ScoreHistogram {
    Binning binning;
    std::vector<std::uint64_t> genuine;
    std::vector<std::uint64_t> impostor;
};

/// Genuine and impostor counts over uniform bins. A value on an interior
/// edge belongs to the upper bin; out-of-range values clamp to the edge bins.
inline ScoreHistogram score_histogram(const ScoreSet& scores, std::size_t bins, double lo, double hi) {
    ScoreHistogram h{Binning(lo, hi, bins), std::vector<std::uint64_t>(bins, 0), std::vector<std::uint64_t>(bins, 0)};
    for (double s : scores.genuine) ++h.genuine[h.binning.index(s)];
    for (double s : scores.impostor) ++h.impostor[h.binning.index(s)];
    return h;
}

}  // namespace cone_sampler
