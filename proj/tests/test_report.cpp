#include <gtest/gtest.h>

#include <cmath>

#include "cone_sampler/report.hpp"

using namespace cone_sampler;
using report::json;

TEST(Report, SeventeenDigits) {
    EXPECT_EQ(report::format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(report::format_double(1.0), "1");
    EXPECT_EQ(std::stod(report::format_double(2.0 / 3.0)), 2.0 / 3.0);
}

TEST(Report, DumpIsSortedAndIndented) {
    const json j{{"b", 0.25}, {"a", json::array({1, 2})}, {"c", nullptr}};
    EXPECT_EQ(report::dump_json(j), "{\n  \"a\": [\n    1,\n    2\n  ],\n  \"b\": 0.25,\n  \"c\": null\n}\n");
}

TEST(Report, VerificationRoundTrip) {
    VerificationReport r;
    r.eer = 1.0 / 3.0;
    r.fmr100 = 0.125;
    r.stats = {0.7071067811865476, 0.1, std::nullopt, std::nullopt};
    r.genuine_pairs = 12;
    r.impostor_pairs = 0;
    r.flags = {"impostor-scores-empty", "fdr-undefined"};
    const auto back = report::verification_from_json(json::parse(report::dump_json(report::to_json(r))));
    EXPECT_EQ(back.eer, r.eer);
    EXPECT_EQ(back.fmr100, r.fmr100);
    EXPECT_EQ(back.stats.g_mean, r.stats.g_mean);
    EXPECT_EQ(back.stats.g_std, r.stats.g_std);
    EXPECT_FALSE(back.stats.i_mean);
    EXPECT_FALSE(back.fdr);
    EXPECT_EQ(back.genuine_pairs, 12u);
    EXPECT_EQ(back.flags, r.flags);
}

TEST(Report, DocumentRoundTrip) {
    report::ReportDocument d;
    d.config = {{"lb", 0.6}, {"k", 50}};
    d.verification.eer = 0.01;
    d.intra_class_consistency = ClassAverage{0.98, 10, {}};
    d.attribute_entropy = {{"expression", ClassAverage{0.6931471805599453, 9, {4}}}};
    d.attribute_std = {{"yaw", ClassAverage{std::nullopt, 0, {1, 2}}}};
    const auto text = report::dump_json(report::to_json(d));
    const auto back = report::report_from_json(json::parse(text));
    EXPECT_EQ(back.tool_version, kVersion);
    EXPECT_EQ(back.config, d.config);
    EXPECT_EQ(back.verification.eer, 0.01);
    ASSERT_TRUE(back.intra_class_consistency);
    EXPECT_EQ(back.intra_class_consistency->value, 0.98);
    EXPECT_FALSE(back.intra_class_diversity);
    ASSERT_EQ(back.attribute_entropy.size(), 1u);
    EXPECT_EQ(back.attribute_entropy[0].second.value, 0.6931471805599453);
    EXPECT_EQ(back.attribute_entropy[0].second.excluded, (std::vector<std::int64_t>{4}));
    EXPECT_FALSE(back.attribute_std[0].second.value);
    EXPECT_EQ(report::dump_json(report::to_json(back)), text);
    EXPECT_EQ(text.find("NaN"), std::string::npos);
}

TEST(Report, HistogramCsv) {
    const auto h = score_histogram({{0.5}, {0.1, -0.9}}, 2, -1.0, 1.0);
    EXPECT_EQ(report::histogram_csv(h), "bin_lo,bin_hi,genuine_count,impostor_count\n-1,0,0,1\n0,1,1,1\n");
}
