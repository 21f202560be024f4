#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cone_sampler/dataset.hpp"
#include "cone_sampler/error.hpp"
#include "cone_sampler/metrics.hpp"
#include "cone_sampler/version.hpp"

namespace cone_sampler::report {

using nlohmann::json;

/// "%.17g": every double round-trips and the text is stable across runs.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline void dump(const json& j, std::string& out, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) out += ",\n";
            first = false;
            out += pad + json(it.key()).dump() + ": ";
            dump(it.value(), out, indent, depth + 1);
        }
        out += "\n" + close_pad + "}";
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) out += ",\n";
            out += pad;
            dump(j[i], out, indent, depth + 1);
        }
        out += "\n" + close_pad + "]";
        return;
    }
    case json::value_t::number_float: out += format_double(j.get<double>()); return;
    default: out += j.dump(); return;
    }
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> number_or_null(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace detail

/// Serializes with two-space indent, floats as %.17g, keys sorted.
inline std::string dump_json(const json& j) {
    std::string out;
    detail::dump(j, out, 2, 0);
    out += "\n";
    return out;
}

inline json to_json(const VerificationReport& r) {
    return {
        {"eer", detail::optional_number(r.eer)},
        {"fmr100", detail::optional_number(r.fmr100)},
        {"g_mean", detail::optional_number(r.stats.g_mean)},
        {"g_std", detail::optional_number(r.stats.g_std)},
        {"i_mean", detail::optional_number(r.stats.i_mean)},
        {"i_std", detail::optional_number(r.stats.i_std)},
        {"fdr", detail::optional_number(r.fdr)},
        {"pair_counts", {{"genuine", r.genuine_pairs}, {"impostor", r.impostor_pairs}}},
        {"flags", r.flags},
    };
}

inline VerificationReport verification_from_json(const json& j) {
    VerificationReport r;
    r.eer = detail::number_or_null(j.at("eer"));
    r.fmr100 = detail::number_or_null(j.at("fmr100"));
    r.stats.g_mean = detail::number_or_null(j.at("g_mean"));
    r.stats.g_std = detail::number_or_null(j.at("g_std"));
    r.stats.i_mean = detail::number_or_null(j.at("i_mean"));
    r.stats.i_std = detail::number_or_null(j.at("i_std"));
    r.fdr = detail::number_or_null(j.at("fdr"));
    r.genuine_pairs = j.at("pair_counts").at("genuine").get<std::size_t>();
    r.impostor_pairs = j.at("pair_counts").at("impostor").get<std::size_t>();
    r.flags = j.at("flags").get<std::vector<std::string>>();
    return r;
}

inline json to_json(const ClassAverage& c) {
    return {{"value", detail::optional_number(c.value)}, {"classes_used", c.classes_used}, {"excluded_classes", c.excluded}};
}

inline ClassAverage class_average_from_json(const json& j) {
    ClassAverage c;
    c.value = detail::number_or_null(j.at("value"));
    c.classes_used = j.at("classes_used").get<std::size_t>();
    c.excluded = j.at("excluded_classes").get<std::vector<std::int64_t>>();
    return c;
}

inline json to_json(const PairingPolicy& p) {
    auto side = [](const PairSelection& s) -> json {
        if (s.mode == PairSelection::Mode::all_pairs) return {{"mode", "all-pairs"}};
        return {{"mode", "sampled"}, {"count", s.count}, {"seed", s.seed}};
    };
    return {{"genuine", side(p.genuine)}, {"impostor", side(p.impostor)}};
}

inline json to_json(const GenerationConfig& c) {
    return {{"lb", c.lb.lower_bound()},
            {"k", c.samples_per_identity},
            {"seed", c.base_seed},
            {"dim", c.dimension},
            {"observation_cone", c.observation_cone},
            {"overlap_guard", c.overlap_guard}};
}

/// Everything `eval` reports about one dataset.
struct ReportDocument {
    std::string tool_version = kVersion;
    json config = json::object();  // generation + evaluation settings
    VerificationReport verification;
    std::optional<ClassAverage> intra_class_consistency;
    std::optional<ClassAverage> intra_class_diversity;
    std::vector<std::pair<std::string, ClassAverage>> attribute_entropy;
    std::vector<std::pair<std::string, ClassAverage>> attribute_std;
};

inline json to_json(const ReportDocument& d) {
    json j{{"tool", "cone_sampler"}, {"tool_version", d.tool_version}, {"config", d.config},
           {"verification", to_json(d.verification)}};
    j["intra_class_consistency"] = d.intra_class_consistency ? to_json(*d.intra_class_consistency) : json(nullptr);
    j["intra_class_diversity"] = d.intra_class_diversity ? to_json(*d.intra_class_diversity) : json(nullptr);
    json ent = json::object(), sd = json::object();
    for (const auto& [name, v] : d.attribute_entropy) ent[name] = to_json(v);
    for (const auto& [name, v] : d.attribute_std) sd[name] = to_json(v);
    j["attribute_entropy"] = ent;
    j["attribute_std"] = sd;
    return j;
}

inline ReportDocument report_from_json(const json& j) {
    ReportDocument d;
    d.tool_version = j.at("tool_version").get<std::string>();
    d.config = j.at("config");
    d.verification = verification_from_json(j.at("verification"));
    if (!j.at("intra_class_consistency").is_null()) d.intra_class_consistency = class_average_from_json(j["intra_class_consistency"]);
    if (!j.at("intra_class_diversity").is_null()) d.intra_class_diversity = class_average_from_json(j["intra_class_diversity"]);
    for (const auto& [name, v] : j.at("attribute_entropy").items()) d.attribute_entropy.emplace_back(name, class_average_from_json(v));
    for (const auto& [name, v] : j.at("attribute_std").items()) d.attribute_std.emplace_back(name, class_average_from_json(v));
    return d;
}

inline json to_json(const SweepResult& s) {
    json points = json::array();
    for (const auto& p : s.points) points.push_back({{"setting", p.setting}, {"report", to_json(p.report)}});
    return points;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) cone_sampler::detail::fail(ErrorClass::input_format, "io-error", path.string() + ": cannot open for writing");
    out << text;
    if (!out) cone_sampler::detail::fail(ErrorClass::input_format, "io-error", path.string() + ": write failed");
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) cone_sampler::detail::fail(ErrorClass::input_format, "io-error", path.string() + ": cannot open for reading");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        cone_sampler::detail::fail(ErrorClass::input_format, "malformed-json", path.string() + ": " + e.what());
    }
}

/// CSV columns bin_lo,bin_hi,genuine_count,impostor_count.
inline std::string histogram_csv(const ScoreHistogram& h) {
    std::string out = "bin_lo,bin_hi,genuine_count,impostor_count\n";
    for (std::size_t i = 0; i < h.binning.bins; ++i) {
        out += format_double(h.binning.edge(i)) + "," + format_double(h.binning.edge(i + 1)) + "," +
               std::to_string(h.genuine[i]) + "," + std::to_string(h.impostor[i]) + "\n";
    }
    return out;
}

}  // namespace cone_sampler::report
