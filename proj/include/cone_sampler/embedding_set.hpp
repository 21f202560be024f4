#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cone_sampler/error.hpp"
#include "cone_sampler/vector_ops.hpp"

namespace cone_sampler {

/// N unit-norm embeddings of dimension d, row-major, each with an identity
/// label in [0, C).
class LabeledEmbeddingSet {
public:
    LabeledEmbeddingSet() = default;

    /// class_count 0 means "max label + 1".
    LabeledEmbeddingSet(std::size_t dim, std::vector<double> data, std::vector<std::int64_t> labels,
                        std::size_t class_count = 0)
        : dim_(dim), data_(std::move(data)), labels_(std::move(labels)) {
        if (dim_ < 2)
            detail::fail(ErrorClass::input_format, "dimension-too-small",
                         "embedding dimension must be at least 2, got " + std::to_string(dim_));
        if (data_.size() != labels_.size() * dim_)
            detail::fail(ErrorClass::input_format, "label-count-mismatch",
                         std::to_string(data_.size() / dim_) + " embeddings but " + std::to_string(labels_.size()) + " labels");
        std::int64_t max_label = -1;
        for (auto l : labels_) {
            if (l < 0) detail::fail(ErrorClass::input_format, "negative-label", "labels must be >= 0");
            max_label = std::max(max_label, l);
        }
        class_count_ = class_count == 0 ? static_cast<std::size_t>(max_label + 1) : class_count;
        if (max_label >= static_cast<std::int64_t>(class_count_))
            detail::fail(ErrorClass::input_format, "label-out-of-range", "label exceeds the declared class count");
        for (std::size_t i = 0; i < size(); ++i) {
            const double n = norm(row(i));
            if (!(std::abs(n - 1.0) <= 1e-9))
                detail::fail(ErrorClass::input_format, "not-unit-norm", "embedding " + std::to_string(i) + " is not unit norm");
        }
    }

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t class_count() const noexcept { return class_count_; }
    bool empty() const noexcept { return labels_.empty(); }

    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * dim_, dim_}; }
    std::int64_t label(std::size_t i) const noexcept { return labels_[i]; }
    const std::vector<std::int64_t>& labels() const noexcept { return labels_; }
    const std::vector<double>& data() const noexcept { return data_; }

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
    std::vector<std::int64_t> labels_;
    std::size_t class_count_ = 0;
};

/// Sample indices grouped by label. Classes are ordered by first appearance
/// and members by index, so any bijective relabeling yields the same groups
/// in the same order.
struct ClassGroup {
    std::int64_t label;
    std::vector<std::size_t> members;
};

inline std::vector<ClassGroup> group_by_label(std::span<const std::int64_t> labels) {
    std::vector<ClassGroup> groups;
    std::unordered_map<std::int64_t, std::size_t> slot;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, fresh] = slot.try_emplace(labels[i], groups.size());
        if (fresh) groups.push_back({labels[i], {}});
        groups[it->second].members.push_back(i);
    }
    return groups;
}

}  // namespace cone_sampler
