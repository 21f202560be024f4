#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cone_sampler/cli.hpp"

using namespace cone_sampler;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "cone_sampler");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = cli::cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("cone_sampler_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string p(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, PipelineSmoke) {
    auto r = run({"refgen", "--ids", "100", "--dim", "64", "--max-cos", "0.3", "--seed", "1337", "--out", p("refs.npy")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(io::read_matrix(p("refs.npy")).rows, 100u);

    r = run({"perturb", "--refs", p("refs.npy"), "--lb", "0.6", "--k", "50", "--seed", "1337", "--out", p("data.npy"), "--labels",
             p("data.labels")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto data = io::read_embeddings(p("data.npy"), p("data.labels"));
    EXPECT_EQ(data.size(), 5000u);

    r = run({"eval", "--data", p("data.npy"), "--labels", p("data.labels"), "--report", p("report.json"), "--hist", p("hist.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = report::report_from_json(report::read_json(p("report.json")));
    EXPECT_TRUE(doc.verification.eer);
    EXPECT_TRUE(doc.verification.fmr100);
    EXPECT_TRUE(doc.verification.fdr);
    EXPECT_TRUE(doc.intra_class_consistency && doc.intra_class_consistency->value);
    EXPECT_TRUE(doc.intra_class_diversity && doc.intra_class_diversity->value);
    EXPECT_EQ(doc.verification.genuine_pairs, 100u * 50u * 49u / 2u);
    EXPECT_EQ(doc.verification.impostor_pairs, 10u * doc.verification.genuine_pairs);
    // Generation settings travel with the data into the report.
    const auto gen = report::read_json(p("report.json"))["config"]["generation"];
    EXPECT_EQ(gen["generation"]["lb"], 0.6);
    EXPECT_EQ(gen["generation"]["seed"], 1337);
    EXPECT_EQ(gen["reference"]["max_cos"], 0.3);

    const auto hist = slurp(p("hist.csv"));
    EXPECT_EQ(hist.rfind("bin_lo,bin_hi,genuine_count,impostor_count\n", 0), 0u);
    EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 101);
}

TEST_F(Cli, IdenticalArgumentsIdenticalBytes) {
    ASSERT_EQ(run({"refgen", "--ids", "30", "--dim", "16", "--max-cos", "0.4", "--out", p("r.npy")}).code, 0);
    for (const char* tag : {"a", "b"}) {
        ASSERT_EQ(run({"perturb", "--refs", p("r.npy"), "--lb", "0.5", "--k", "8", "--obs-cone", "0.95", "--out",
                       p(std::string(tag) + ".npy"), "--labels", p(std::string(tag) + ".labels")})
                      .code,
                  0);
        ASSERT_EQ(run({"eval", "--data", p(std::string(tag) + ".npy"), "--labels", p(std::string(tag) + ".labels"), "--report",
                       p(std::string(tag) + ".json")})
                      .code,
                  0);
    }
    EXPECT_EQ(slurp(p("a.npy")), slurp(p("b.npy")));
    EXPECT_EQ(slurp(p("a.labels")), slurp(p("b.labels")));
}

TEST_F(Cli, NoiseBaseline) {
    ASSERT_EQ(run({"refgen", "--ids", "10", "--dim", "32", "--max-cos", "0.4", "--out", p("r.npy")}).code, 0);
    auto r = run({"noise-perturb", "--refs", p("r.npy"), "--match-lb", "0.6", "--k", "5", "--out", p("n.npy"), "--labels",
                  p("n.labels")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(io::read_embeddings(p("n.npy"), p("n.labels")).size(), 50u);
    r = run({"noise-perturb", "--refs", p("r.npy"), "--match-lb", "0.6", "--sigma", "0.1", "--out", p("n.npy"), "--labels",
             p("n.labels")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("conflicting-options"), std::string::npos);
    r = run({"noise-perturb", "--refs", p("r.npy"), "--out", p("n.npy"), "--labels", p("n.labels")});
    EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, SimulateAndHist) {
    auto r = run({"simulate", "--ids", "40", "--dim", "32", "--k", "6", "--lb", "1.0,0.6", "--obs-cone", "1.0", "--report",
                  p("sweep.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = report::read_json(p("sweep.json"));
    ASSERT_EQ(doc["sweep"].size(), 2u);
    EXPECT_EQ(doc["sweep"][1]["setting"], 1.0);
    EXPECT_EQ(doc["sweep"][1]["report"]["eer"], 0.0);

    ASSERT_EQ(run({"refgen", "--ids", "10", "--dim", "8", "--max-cos", "0.5", "--out", p("r.npy")}).code, 0);
    ASSERT_EQ(run({"perturb", "--refs", p("r.npy"), "--lb", "0.7", "--k", "4", "--out", p("d.npy"), "--labels", p("d.labels")}).code, 0);
    r = run({"hist", "--data", p("d.npy"), "--labels", p("d.labels"), "--out", p("h.csv"), "--bins", "4", "--range", "0,1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(p("h.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(Cli, EvalWithAttributes) {
    ASSERT_EQ(run({"refgen", "--ids", "3", "--dim", "4", "--max-cos", "0.5", "--out", p("r.npy")}).code, 0);
    ASSERT_EQ(run({"perturb", "--refs", p("r.npy"), "--lb", "0.7", "--k", "2", "--out", p("d.npy"), "--labels", p("d.labels")}).code, 0);
    std::ofstream(p("a.csv")) << "expression,age\nhappy,20\nsad,30\nhappy,40\nhappy,41\nsad,50\nsad,55\n";
    auto r = run({"eval", "--data", p("d.npy"), "--labels", p("d.labels"), "--report", p("rep.json"), "--attrs", p("a.csv"),
                  "--attr-bins", "10"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = report::read_json(p("rep.json"));
    EXPECT_NEAR(doc["attribute_entropy"]["expression"]["value"].get<double>(), std::log(2.0) / 3, 1e-15);
    EXPECT_NEAR(doc["attribute_std"]["age"]["value"].get<double>(), (5.0 + 0.5 + 2.5) / 3, 1e-12);
    EXPECT_TRUE(doc["attribute_entropy"].contains("age"));
}

TEST_F(Cli, ErrorClassesAndExitCodes) {
    auto r = run({"eval", "--data", p("missing.npy"), "--labels", p("missing.labels"), "--report", p("x.json")});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(r.err.rfind("cone_sampler: error input-format ", 0), 0u);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

    r = run({"refgen", "--ids", "10", "--dim", "64"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error usage bad-arguments"), std::string::npos);

    r = run({"refgen", "--ids", "10", "--dim", "64", "--max-cos", "0.3", "--out", p("r.npy"), "--bogus"});
    EXPECT_EQ(r.code, 2);

    r = run({"refgen", "--ids", "5", "--dim", "2", "--max-cos", "-0.9", "--out", p("r.npy")});
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.err.find("infeasible-config reference-set-infeasible"), std::string::npos);

    r = run({"refgen", "--ids", "5", "--dim", "1", "--max-cos", "0.3", "--out", p("r.npy")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("dimension-too-small"), std::string::npos);

    ASSERT_EQ(run({"refgen", "--ids", "5", "--dim", "8", "--max-cos", "0.5", "--out", p("r.npy")}).code, 0);
    r = run({"perturb", "--refs", p("r.npy"), "--lb", "1.5", "--out", p("d.npy"), "--labels", p("d.labels")});
    EXPECT_EQ(r.code, 2);

    EXPECT_EQ(run({}).code, 2);
    r = run({"--version"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, std::string(kVersion) + "\n");
}

TEST_F(Cli, ThreadEnvironment) {
    ::setenv("CONE_SAMPLER_THREADS", "lots", 1);
    auto r = run({"refgen", "--ids", "5", "--dim", "8", "--max-cos", "0.5", "--out", p("r.npy")});
    ::unsetenv("CONE_SAMPLER_THREADS");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("invalid-thread-count"), std::string::npos);
}

TEST(CliBinary, ExitCodeFromProcess) {
    const std::string base = std::string("\"") + CONE_SAMPLER_CLI + "\"";
    EXPECT_EQ(std::system((base + " --version > /dev/null").c_str()), 0);
    const int status = std::system((base + " eval --data /nonexistent.npy --labels /nonexistent --report /dev/null 2> /dev/null").c_str());
    EXPECT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 3);
}
