#pragma once

// Command-line front end. Subcommands:
//
//   refgen         reference identity set (rejection-sampled unit vectors)
//   perturb        angular perturbation dataset from a reference set
//   noise-perturb  Euclidean-noise baseline dataset
//   eval           separability / diversity report for a labeled dataset
//   simulate       generate + evaluate over a sweep of lower bounds
//   hist           genuine/impostor score histogram CSV
//
// Exit codes: 0 ok, 2 usage, 3 input format, 4 infeasible config,
// 5 internal. Failures print exactly one line to stderr:
//
//   cone_sampler: error <class> <code>: <message>

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cone_sampler/dataset.hpp"
#include "cone_sampler/error.hpp"
#include "cone_sampler/geometry.hpp"
#include "cone_sampler/io.hpp"
#include "cone_sampler/metrics.hpp"
#include "cone_sampler/report.hpp"
#include "cone_sampler/version.hpp"

namespace cone_sampler::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kThreadsEnv = "CONE_SAMPLER_THREADS";

/// Worker cap from CONE_SAMPLER_THREADS; unset or empty means auto (0).
inline unsigned threads_from_env() {
    const char* raw = std::getenv(kThreadsEnv);
    if (raw == nullptr || *raw == '\0') return 0;
    char* end = nullptr;
    const long v = std::strtol(raw, &end, 10);
    if (*end != '\0' || v < 0 || v > 4096)
        detail::fail(ErrorClass::usage, "invalid-thread-count", std::string(kThreadsEnv) + "='" + raw + "' is not a thread count");
    return static_cast<unsigned>(v);
}

/// Sidecar holding the configuration that produced a data file.
inline fs::path meta_path(const fs::path& data) { return fs::path(data.string() + ".meta.json"); }

inline json read_meta_if_present(const fs::path& data) {
    const auto p = meta_path(data);
    return fs::exists(p) ? report::read_json(p) : json(nullptr);
}

namespace detail {

using cone_sampler::detail::fail;

struct RefgenArgs {
    std::size_t ids = 0, dim = 0;
    double max_cos = 0.0;
    std::uint64_t seed = 1337;
    std::string out;
};

struct PerturbArgs {
    std::string refs, out, labels;
    double lb = 0.0;
    std::size_t k = 50;
    std::uint64_t seed = 1337;
    double obs_cone = 1.0;
    double omega = 1.0;
    bool no_guard = false;
};

struct NoiseArgs {
    std::string refs, out, labels;
    double sigma = 0.0;
    double match_lb = -1.0;
    std::size_t k = 50;
    std::uint64_t seed = 1337;
};

struct PairingArgs {
    std::size_t impostor_mult = 10;
    std::uint64_t seed = 1337;
};

struct EvalArgs {
    std::string data, labels, report_path, hist, attrs;
    PairingArgs pairing;
    double threshold = 0.3;
    std::size_t bins = 100;
    std::vector<double> range{-1.0, 1.0};
    std::size_t attr_bins = 0;
    std::vector<double> attr_range;
};

struct SimulateArgs {
    std::size_t ids = 1000, dim = 512, k = 50;
    double max_cos = 0.5;
    std::uint64_t seed = 1337;
    double obs_cone = 0.95;
    std::vector<double> lbs{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
    std::size_t impostor_mult = 10;
    bool no_guard = false;
    std::string report_path;
};

struct HistArgs {
    std::string data, labels, out;
    PairingArgs pairing;
    std::size_t bins = 100;
    std::vector<double> range{-1.0, 1.0};
};

inline void check_range(const std::vector<double>& r, const char* flag) {
    if (r.size() != 2 || !(r[0] < r[1])) fail(ErrorClass::usage, "invalid-range", std::string(flag) + " needs lo,hi with lo < hi");
}

inline void run_refgen(const RefgenArgs& a, unsigned, std::ostream& out) {
    RandomStream rng(a.seed);
    const auto set = generate_reference_set(a.ids, a.dim, a.max_cos, rng);
    io::write_identity_set(set, a.out);
    const json meta{{"command", "refgen"}, {"tool_version", kVersion}, {"ids", a.ids}, {"dim", a.dim},
                    {"max_cos", a.max_cos}, {"seed", a.seed}};
    report::write_text(meta_path(a.out), report::dump_json(meta));
    out << "wrote " << set.size() << " reference vectors (d=" << set.dim() << ") to " << a.out << "\n";
}

inline void run_perturb(const PerturbArgs& a, unsigned threads, std::ostream& out) {
    const auto set = io::read_identity_set(a.refs, threads);
    GenerationConfig cfg;
    cfg.lb = ConeSpec(a.lb);
    cfg.samples_per_identity = a.k;
    cfg.base_seed = a.seed;
    cfg.dimension = set.dim();
    cfg.observation_cone = a.obs_cone;
    cfg.overlap_guard = !a.no_guard;
    cfg.validate();
    GuidanceScale omega(a.omega);

    const std::size_t rows = set.size() * a.k;
    io::NpyWriter writer(a.out, rows, set.dim());
    std::vector<std::int64_t> labels;
    labels.reserve(rows);
    generate_dataset_blocks(
        set, cfg,
        [&](const DatasetBlock& b) {
            writer.append(b.data);
            labels.insert(labels.end(), b.labels.begin(), b.labels.end());
        },
        threads);
    writer.close();
    io::write_labels(a.labels, labels);

    json meta{{"command", "perturb"}, {"tool_version", kVersion}, {"refs", a.refs},
              {"reference", read_meta_if_present(a.refs)}, {"generation", report::to_json(cfg)}, {"omega", omega.omega()}};
    report::write_text(meta_path(a.out), report::dump_json(meta));
    out << "wrote " << rows << " samples (" << set.size() << " identities x " << a.k << ") to " << a.out << "\n";
}

inline void run_noise_perturb(const NoiseArgs& a, unsigned threads, std::ostream& out) {
    const bool has_sigma = a.sigma > 0.0, has_match = a.match_lb >= 0.0;
    if (has_sigma == has_match) fail(ErrorClass::usage, "conflicting-options", "give exactly one of --sigma and --match-lb");
    if (a.k < 1) fail(ErrorClass::usage, "invalid-sample-count", "--k must be >= 1");
    const auto set = io::read_identity_set(a.refs, threads);
    const double sigma = has_sigma ? a.sigma : calibrate_noise_sigma(set.dim(), mean_cap_angle(ConeSpec(a.match_lb)));

    const std::size_t k = a.k, d = set.dim();
    std::vector<double> data(set.size() * k * d);
    std::vector<std::int64_t> labels(set.size() * k);
    parallel_for(set.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            RandomStream rng(substream_seed(a.seed, i, 2));
            for (std::size_t s = 0; s < k; ++s) {
                const auto v = noise_perturb(set.vector(i), sigma, rng);
                std::copy(v.components().begin(), v.components().end(), data.begin() + static_cast<std::ptrdiff_t>((i * k + s) * d));
                labels[i * k + s] = static_cast<std::int64_t>(i);
            }
        }
    });
    io::write_matrix(a.out, set.size() * k, d, data);
    io::write_labels(a.labels, labels);
    json meta{{"command", "noise-perturb"}, {"tool_version", kVersion}, {"refs", a.refs},
              {"reference", read_meta_if_present(a.refs)}, {"sigma", sigma}, {"k", k}, {"seed", a.seed}};
    if (has_match) meta["match_lb"] = a.match_lb;
    report::write_text(meta_path(a.out), report::dump_json(meta));
    out << "wrote " << labels.size() << " noise-perturbed samples (sigma=" << report::format_double(sigma) << ") to " << a.out << "\n";
}

inline ScoreSet scores_for(const LabeledEmbeddingSet& data, const PairingArgs& p, unsigned threads, PairingPolicy& policy) {
    policy = default_pairing(data, p.impostor_mult, p.seed);
    return build_score_set(data, policy, threads);
}

inline void run_eval(const EvalArgs& a, unsigned threads, std::ostream& out) {
    check_range(a.range, "--range");
    if (a.bins < 1) fail(ErrorClass::usage, "invalid-bins", "--bins must be >= 1");
    const auto data = io::read_embeddings(a.data, a.labels);
    PairingPolicy policy;
    const auto scores = scores_for(data, a.pairing, threads, policy);

    report::ReportDocument doc;
    doc.verification = verification_report(scores);
    doc.intra_class_consistency = intra_class_consistency(data, a.threshold);
    doc.intra_class_diversity = intra_class_diversity(data);
    if (!a.attrs.empty()) {
        const auto table = io::read_attributes(a.attrs);
        std::optional<Binning> binning;
        if (a.attr_bins > 0) {
            const auto r = a.attr_range.empty() ? std::vector<double>{0.0, 100.0} : a.attr_range;
            check_range(r, "--attr-range");
            binning.emplace(r[0], r[1], a.attr_bins);
        }
        for (const auto& ch : table.channels()) {
            if (!ch.continuous() || binning) doc.attribute_entropy.emplace_back(ch.name, attribute_entropy(data, table, ch.name, binning));
            if (ch.continuous()) doc.attribute_std.emplace_back(ch.name, attribute_std(data, table, ch.name));
        }
    }
    json eval_cfg{{"pairing", report::to_json(policy)}, {"impostor_mult", a.pairing.impostor_mult},
                  {"threshold", a.threshold}, {"bins", a.bins}, {"range", a.range}};
    if (!a.attrs.empty()) eval_cfg["attributes"] = a.attrs;
    if (a.attr_bins > 0) eval_cfg["attribute_bins"] = {{"bins", a.attr_bins}, {"range", a.attr_range}};
    doc.config = {{"data", a.data}, {"labels", a.labels}, {"generation", read_meta_if_present(a.data)}, {"evaluation", eval_cfg}};
    report::write_text(a.report_path, report::dump_json(report::to_json(doc)));
    if (!a.hist.empty())
        report::write_text(a.hist, report::histogram_csv(score_histogram(scores, a.bins, a.range[0], a.range[1])));

    const auto& v = doc.verification;
    auto show = [](const std::optional<double>& x) { return x ? report::format_double(*x) : std::string("undefined"); };
    out << "samples " << data.size() << ", classes " << data.class_count() << ", genuine pairs " << v.genuine_pairs
        << ", impostor pairs " << v.impostor_pairs << "\n"
        << "EER " << show(v.eer) << "  FMR100 " << show(v.fmr100) << "  FDR " << show(v.fdr) << "\n";
}

inline void run_simulate(const SimulateArgs& a, unsigned threads, std::ostream& out) {
    RandomStream rng(a.seed);
    const auto set = generate_reference_set(a.ids, a.dim, a.max_cos, rng);
    GenerationConfig cfg;
    cfg.samples_per_identity = a.k;
    cfg.base_seed = a.seed;
    cfg.dimension = a.dim;
    cfg.observation_cone = a.obs_cone;
    cfg.overlap_guard = !a.no_guard;
    const auto sweep = run_lb_sweep(set, cfg, a.lbs, a.impostor_mult, threads);

    json doc{{"tool", "cone_sampler"}, {"tool_version", kVersion},
             {"config", {{"ids", a.ids}, {"dim", a.dim}, {"max_cos", a.max_cos}, {"seed", a.seed}, {"k", a.k},
                         {"observation_cone", a.obs_cone}, {"overlap_guard", !a.no_guard}, {"impostor_mult", a.impostor_mult},
                         {"lbs", a.lbs}}},
             {"sweep", report::to_json(sweep)}};
    report::write_text(a.report_path, report::dump_json(doc));
    auto show = [](const std::optional<double>& x) { return x ? report::format_double(*x) : std::string("undefined"); };
    out << "lb\tEER\tFMR100\tG-mean\tG-std\tI-mean\tI-std\tFDR\n";
    for (auto it = sweep.points.rbegin(); it != sweep.points.rend(); ++it) {
        const auto& r = it->report;
        out << it->setting << "\t" << show(r.eer) << "\t" << show(r.fmr100) << "\t" << show(r.stats.g_mean) << "\t"
            << show(r.stats.g_std) << "\t" << show(r.stats.i_mean) << "\t" << show(r.stats.i_std) << "\t" << show(r.fdr) << "\n";
    }
}

inline void run_hist(const HistArgs& a, unsigned threads, std::ostream& out) {
    check_range(a.range, "--range");
    if (a.bins < 1) fail(ErrorClass::usage, "invalid-bins", "--bins must be >= 1");
    const auto data = io::read_embeddings(a.data, a.labels);
    PairingPolicy policy;
    const auto scores = scores_for(data, a.pairing, threads, policy);
    report::write_text(a.out, report::histogram_csv(score_histogram(scores, a.bins, a.range[0], a.range[1])));
    out << "wrote " << a.bins << "-bin histogram of " << scores.genuine.size() << " genuine and " << scores.impostor.size()
        << " impostor scores to " << a.out << "\n";
}

inline void add_pairing_flags(CLI::App* sub, PairingArgs& p) {
    sub->add_option("--impostor-mult", p.impostor_mult, "Sampled impostor pairs per genuine pair")->capture_default_str();
    sub->add_option("--seed", p.seed, "Seed for impostor pair sampling")->capture_default_str();
}

}  // namespace detail

/// Parses argv and runs one subcommand. Never throws.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    using namespace detail;
    CLI::App app{"Cone-constrained identity embedding sampler and separability evaluator", "cone_sampler"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    RefgenArgs refgen;
    auto* rg = app.add_subcommand("refgen", "Generate a reference identity set");
    rg->add_option("--ids", refgen.ids, "Number of identities")->required();
    rg->add_option("--dim", refgen.dim, "Embedding dimension")->required();
    rg->add_option("--max-cos", refgen.max_cos, "Maximum pairwise cosine")->required();
    rg->add_option("--seed", refgen.seed, "Random seed")->capture_default_str();
    rg->add_option("--out", refgen.out, "Output NPY file")->required();

    PerturbArgs perturb;
    auto* pt = app.add_subcommand("perturb", "Angular perturbation of every reference identity");
    pt->add_option("--refs", perturb.refs, "Reference NPY file")->required();
    pt->add_option("--lb", perturb.lb, "Cosine lower bound in [0, 1]")->required();
    pt->add_option("--k", perturb.k, "Samples per identity")->capture_default_str();
    pt->add_option("--seed", perturb.seed, "Base seed")->capture_default_str();
    pt->add_option("--obs-cone", perturb.obs_cone, "Observation jitter cone, 1 = none")->capture_default_str();
    pt->add_option("--omega", perturb.omega, "Guidance scale recorded with the output")->capture_default_str();
    pt->add_flag("--no-overlap-guard", perturb.no_guard, "Do not raise lb against the nearest identity");
    pt->add_option("--out", perturb.out, "Output NPY file")->required();
    pt->add_option("--labels", perturb.labels, "Output label file")->required();

    NoiseArgs noise;
    auto* np = app.add_subcommand("noise-perturb", "Euclidean-noise baseline dataset");
    np->add_option("--refs", noise.refs, "Reference NPY file")->required();
    auto* sigma_opt = np->add_option("--sigma", noise.sigma, "Noise standard deviation");
    auto* match_opt = np->add_option("--match-lb", noise.match_lb, "Pick sigma to match the mean angle of this lb");
    sigma_opt->excludes(match_opt);
    np->add_option("--k", noise.k, "Samples per identity")->capture_default_str();
    np->add_option("--seed", noise.seed, "Base seed")->capture_default_str();
    np->add_option("--out", noise.out, "Output NPY file")->required();
    np->add_option("--labels", noise.labels, "Output label file")->required();

    EvalArgs eval;
    auto* ev = app.add_subcommand("eval", "Separability and diversity report");
    ev->add_option("--data", eval.data, "Embedding NPY file")->required();
    ev->add_option("--labels", eval.labels, "Label file")->required();
    ev->add_option("--report", eval.report_path, "Output JSON report")->required();
    ev->add_option("--hist", eval.hist, "Optional histogram CSV");
    add_pairing_flags(ev, eval.pairing);
    ev->add_option("--threshold", eval.threshold, "Cosine threshold r for intra-class consistency")->capture_default_str();
    ev->add_option("--bins", eval.bins, "Histogram bins")->capture_default_str();
    ev->add_option("--range", eval.range, "Histogram range lo,hi")->delimiter(',')->expected(2);
    ev->add_option("--attrs", eval.attrs, "Attribute CSV aligned with the samples");
    ev->add_option("--attr-bins", eval.attr_bins, "Bins for entropy of continuous attributes");
    ev->add_option("--attr-range", eval.attr_range, "Range lo,hi for attribute bins")->delimiter(',')->expected(2);

    SimulateArgs sim;
    auto* sm = app.add_subcommand("simulate", "Generate and evaluate datasets over a sweep of lower bounds");
    sm->add_option("--ids", sim.ids, "Number of identities")->capture_default_str();
    sm->add_option("--dim", sim.dim, "Embedding dimension")->capture_default_str();
    sm->add_option("--max-cos", sim.max_cos, "Maximum pairwise cosine of the reference set")->capture_default_str();
    sm->add_option("--seed", sim.seed, "Base seed")->capture_default_str();
    sm->add_option("--k", sim.k, "Samples per identity")->capture_default_str();
    sm->add_option("--obs-cone", sim.obs_cone, "Observation jitter cone")->capture_default_str();
    sm->add_option("--lb", sim.lbs, "Lower bounds to sweep (comma separated)")->delimiter(',');
    sm->add_option("--impostor-mult", sim.impostor_mult, "Sampled impostor pairs per genuine pair")->capture_default_str();
    sm->add_flag("--no-overlap-guard", sim.no_guard, "Do not raise lb against the nearest identity");
    sm->add_option("--report", sim.report_path, "Output JSON")->required();

    HistArgs hist;
    auto* hs = app.add_subcommand("hist", "Genuine/impostor score histogram");
    hs->add_option("--data", hist.data, "Embedding NPY file")->required();
    hs->add_option("--labels", hist.labels, "Label file")->required();
    hs->add_option("--out", hist.out, "Output CSV")->required();
    add_pairing_flags(hs, hist.pairing);
    hs->add_option("--bins", hist.bins, "Number of bins")->capture_default_str();
    hs->add_option("--range", hist.range, "Range lo,hi")->delimiter(',')->expected(2);

    auto report_error = [&](ErrorClass cls, const std::string& code, std::string message) {
        for (char& c : message)
            if (c == '\n' || c == '\r') c = ' ';
        err << "cone_sampler: error " << to_string(cls) << " " << code << ": " << message << "\n";
        return exit_code(cls);
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        const std::string code = dynamic_cast<const CLI::ExcludesError*>(&e) ? "conflicting-options" : "bad-arguments";
        return report_error(ErrorClass::usage, code, e.what());
    }

    try {
        const unsigned threads = threads_from_env();
        if (*rg) run_refgen(refgen, threads, out);
        else if (*pt) run_perturb(perturb, threads, out);
        else if (*np) run_noise_perturb(noise, threads, out);
        else if (*ev) run_eval(eval, threads, out);
        else if (*sm) run_simulate(sim, threads, out);
        else if (*hs) run_hist(hist, threads, out);
        return 0;
    } catch (const Error& e) {
        std::string msg = e.what();
        const std::string prefix = e.code() + ": ";
        if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
        return report_error(e.error_class(), e.code(), msg);
    } catch (const std::exception& e) {
        return report_error(ErrorClass::internal, "unexpected", e.what());
    }
}

}  // namespace cone_sampler::cli
