#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cone_sampler/dataset.hpp"
#include "cone_sampler/io.hpp"
#include "generators.hpp"

using namespace cone_sampler;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("cone_sampler_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path path(const std::string& name) const { return dir_ / name; }

    fs::path dir_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

std::string code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

LabeledEmbeddingSet sample_set(std::size_t ids, std::size_t k, std::size_t d) {
    RandomStream rng(99);
    const auto set = generate_reference_set(ids, d, 0.5, rng);
    GenerationConfig cfg;
    cfg.samples_per_identity = k;
    cfg.dimension = d;
    return generate_dataset(set, cfg, 1);
}

using Io = TempDir;

}  // namespace

TEST_F(Io, HeaderMatchesNumpyLayout) {
    const std::string h = io::detail::npy_header(500, 512);
    EXPECT_EQ(h.size() % 64, 0u);
    EXPECT_EQ(h.substr(0, 6), "\x93NUMPY");
    EXPECT_EQ(h[6], 1);
    EXPECT_EQ(h[7], 0);
    EXPECT_NE(h.find("{'descr': '<f4', 'fortran_order': False, 'shape': (500, 512), }"), std::string::npos);
    EXPECT_EQ(h.back(), '\n');
}

TEST_F(Io, FileSizeArithmetic) {
    const auto data = sample_set(10, 50, 512);
    io::write_embeddings(data, path("d.npy"), path("d.labels"));
    EXPECT_EQ(fs::file_size(path("d.npy")), 128u + 500u * 512u * 4u);
}

TEST_F(Io, RoundTripWithinFloatQuantization) {
    const auto data = sample_set(12, 9, 64);
    io::write_embeddings(data, path("d.npy"), path("d.labels"));
    const auto back = io::read_embeddings(path("d.npy"), path("d.labels"));
    ASSERT_EQ(back.size(), data.size());
    ASSERT_EQ(back.dim(), data.dim());
    EXPECT_EQ(back.labels(), data.labels());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_GE(dot(back.row(i), data.row(i)), 1.0 - 1e-6);
        EXPECT_NEAR(norm(back.row(i)), 1.0, 1e-12);
    }
}

TEST_F(Io, WritesAreByteIdentical) {
    const auto data = sample_set(5, 4, 16);
    io::write_embeddings(data, path("a.npy"), path("a.labels"));
    io::write_embeddings(data, path("b.npy"), path("b.labels"));
    EXPECT_EQ(slurp(path("a.npy")), slurp(path("b.npy")));
    EXPECT_EQ(slurp(path("a.labels")), slurp(path("b.labels")));
}

TEST_F(Io, LabelFileFormat) {
    const std::vector<std::int64_t> labels{0, 12, 3};
    io::write_labels(path("l"), labels);
    EXPECT_EQ(slurp(path("l")), "0\n12\n3\n");
    EXPECT_EQ(io::read_labels(path("l")), labels);
    spit(path("bad"), "1\nx\n");
    EXPECT_EQ(code_of([&] { io::read_labels(path("bad")); }), "malformed-label");
}

TEST_F(Io, LabelCountMismatch) {
    const auto data = sample_set(3, 2, 8);
    io::write_embeddings(data, path("d.npy"), path("d.labels"));
    std::vector<std::int64_t> fewer(data.labels().begin(), data.labels().end() - 1);
    io::write_labels(path("short.labels"), fewer);
    EXPECT_EQ(code_of([&] { io::read_embeddings(path("d.npy"), path("short.labels")); }), "label-count-mismatch");
}

TEST_F(Io, DimensionOneRejected) {
    io::write_matrix(path("d1.npy"), 2, 1, std::vector<double>{1.0, 1.0});
    io::write_labels(path("d1.labels"), std::vector<std::int64_t>{0, 1});
    try {
        io::read_embeddings(path("d1.npy"), path("d1.labels"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "dimension-too-small");
        EXPECT_EQ(e.error_class(), ErrorClass::input_format);
    }
}

TEST_F(Io, EmptyDatasetRejected) {
    EXPECT_EQ(code_of([&] { io::write_embeddings(LabeledEmbeddingSet(4, {}, {}), path("e.npy"), path("e.labels")); }),
              "empty-dataset");
}

TEST_F(Io, MalformedFiles) {
    spit(path("junk.npy"), "not an npy file at all");
    EXPECT_EQ(code_of([&] { io::read_matrix(path("junk.npy")); }), "malformed-header");

    io::write_matrix(path("ok.npy"), 2, 3, std::vector<double>{1, 0, 0, 0, 1, 0});
    auto bytes = slurp(path("ok.npy"));
    spit(path("trunc.npy"), bytes.substr(0, bytes.size() - 4));
    const auto msg = [&] {
        try {
            io::read_matrix(path("trunc.npy"));
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    }();
    EXPECT_NE(msg.find("payload-size-mismatch"), std::string::npos);
    EXPECT_NE(msg.find("byte"), std::string::npos);

    auto i2 = bytes;
    i2.replace(i2.find("<f4"), 3, "<i4");
    spit(path("int.npy"), i2);
    EXPECT_EQ(code_of([&] { io::read_matrix(path("int.npy")); }), "unsupported-dtype");

    auto fo = bytes;
    fo.replace(fo.find("False"), 5, "True ");
    spit(path("fortran.npy"), fo);
    EXPECT_EQ(code_of([&] { io::read_matrix(path("fortran.npy")); }), "unsupported-layout");
}

TEST_F(Io, NonFiniteValueReportsOffset) {
    io::write_matrix(path("nan.npy"), 1, 2, std::vector<double>{NAN, 1.0});
    try {
        io::read_matrix(path("nan.npy"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.error_class(), ErrorClass::input_format);
        EXPECT_NE(std::string(e.what()).find("128"), std::string::npos);
    }
}

TEST_F(Io, IdentitySetRoundTrip) {
    RandomStream rng(5);
    const auto set = generate_reference_set(20, 32, 0.3, rng);
    io::write_identity_set(set, path("r.npy"));
    const auto back = io::read_identity_set(path("r.npy"), 1);
    ASSERT_EQ(back.size(), 20u);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_GE(dot(back.vector(i).components(), set.vector(i).components()), 1 - 1e-6);
}

TEST_F(Io, WriterRejectsWrongRowCount) {
    io::NpyWriter w(path("w.npy"), 3, 2);
    w.append(std::vector<double>{1, 0});
    EXPECT_THROW(w.close(), Error);
    EXPECT_THROW(w.append(std::vector<double>{1}), Error);
}

TEST_F(Io, AttributesDetectColumnKinds) {
    spit(path("a.csv"), "expression,yaw,\"note, quoted\"\nhappy,-10.5,a\nsad,3,\"b,c\"\n");
    const auto t = io::read_attributes(path("a.csv"));
    ASSERT_EQ(t.channels().size(), 3u);
    EXPECT_FALSE(t.channel("expression").continuous());
    EXPECT_TRUE(t.channel("yaw").continuous());
    EXPECT_EQ(std::get<std::vector<double>>(t.channel("yaw").values), (std::vector<double>{-10.5, 3.0}));
    EXPECT_EQ(std::get<std::vector<std::string>>(t.channel("note, quoted").values), (std::vector<std::string>{"a", "b,c"}));
    spit(path("ragged.csv"), "a,b\n1\n");
    EXPECT_EQ(code_of([&] { io::read_attributes(path("ragged.csv")); }), "malformed-attributes");
}
