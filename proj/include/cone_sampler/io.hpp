#pragma once

// File formats:
//   * embeddings: NPY 1.0, dtype '<f4', C order, shape (N, d); '<f8' is
//     also accepted on read. The header is padded so the payload starts on a
//     64-byte boundary, as numpy does.
//   * labels: one base-10 integer per line, LF terminated, N lines.
//   * attributes: CSV with a header row of channel names and one row per
//     sample. A column whose cells all parse as finite decimals is
//     continuous, anything else is discrete.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cone_sampler/embedding_set.hpp"
#include "cone_sampler/error.hpp"
#include "cone_sampler/geometry.hpp"
#include "cone_sampler/metrics.hpp"

namespace cone_sampler::io {

namespace detail {

using cone_sampler::detail::fail;

inline constexpr char kMagic[] = "\x93NUMPY";
inline constexpr std::size_t kMagicLen = 6;

[[noreturn]] inline void format_error(std::string code, const std::filesystem::path& path, const std::string& detail) {
    fail(ErrorClass::input_format, std::move(code), path.string() + ": " + detail);
}

[[noreturn]] inline void io_error(const std::filesystem::path& path, const std::string& what) {
    fail(ErrorClass::input_format, "io-error", path.string() + ": " + what);
}

inline std::string npy_header(std::size_t rows, std::size_t cols) {
    std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(rows) + ", " +
                       std::to_string(cols) + "), }";
    const std::size_t preamble = kMagicLen + 2 + 2;
    std::size_t total = preamble + dict.size() + 1;
    const std::size_t padded = (total + 63) / 64 * 64;
    dict.append(padded - total, ' ');
    dict.push_back('\n');
    std::string out(kMagic, kMagicLen);
    out.push_back('\x01');
    out.push_back('\x00');
    const auto len = static_cast<std::uint16_t>(dict.size());
    out.push_back(static_cast<char>(len & 0xFF));
    out.push_back(static_cast<char>(len >> 8));
    return out + dict;
}

inline void put_f32_le(char* dst, float value) {
    const auto bits = std::bit_cast<std::uint32_t>(value);
    for (int b = 0; b < 4; ++b) dst[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
}

inline std::uint64_t get_le(const unsigned char* src, int bytes) {
    std::uint64_t v = 0;
    for (int b = bytes - 1; b >= 0; --b) v = (v << 8) | src[b];
    return v;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Value text following `'key':` in a numpy header dict.
inline std::string_view dict_value(std::string_view dict, std::string_view key, const std::filesystem::path& path) {
    const std::string quoted = "'" + std::string(key) + "'";
    auto pos = dict.find(quoted);
    if (pos == std::string_view::npos) format_error("malformed-header", path, "header lacks key " + quoted + " (byte offset 10)");
    pos = dict.find(':', pos + quoted.size());
    if (pos == std::string_view::npos) format_error("malformed-header", path, "no value for key " + quoted);
    auto rest = dict.substr(pos + 1);
    rest = trim(rest);
    if (!rest.empty() && rest.front() == '(') {
        const auto close = rest.find(')');
        if (close == std::string_view::npos) format_error("malformed-header", path, "unterminated shape tuple");
        return rest.substr(0, close + 1);
    }
    const auto end = rest.find_first_of(",}");
    return trim(rest.substr(0, end));
}

inline bool parse_size(std::string_view s, std::size_t& out) {
    s = trim(s);
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

/// "(3, 4)" -> {3, 4}; "(5,)" -> {5}. Empty vector on malformed input.
inline std::vector<std::size_t> parse_shape(std::string_view tuple) {
    if (tuple.size() < 2 || tuple.front() != '(' || tuple.back() != ')') return {};
    tuple = tuple.substr(1, tuple.size() - 2);
    std::vector<std::size_t> dims;
    while (!trim(tuple).empty()) {
        const auto comma = tuple.find(',');
        std::size_t v = 0;
        if (!parse_size(tuple.substr(0, comma), v)) return {};
        dims.push_back(v);
        if (comma == std::string_view::npos) break;
        tuple.remove_prefix(comma + 1);
    }
    return dims;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

}  // namespace detail

/// A dense row-major matrix as stored in an NPY file, widened to double.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

/// Streams float32 rows into an NPY file whose shape is fixed up front.
class NpyWriter {
public:
    NpyWriter(const std::filesystem::path& path, std::size_t rows, std::size_t cols)
        : path_(path), rows_(rows), cols_(cols), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) detail::io_error(path, "cannot open for writing");
        const auto header = detail::npy_header(rows, cols);
        out_.write(header.data(), static_cast<std::streamsize>(header.size()));
    }

    void append(std::span<const double> values) {
        if (values.size() % cols_ != 0)
            cone_sampler::detail::fail(ErrorClass::usage, "partial-row", "append expects whole rows");
        written_ += values.size() / cols_;
        if (written_ > rows_) cone_sampler::detail::fail(ErrorClass::usage, "too-many-rows", "more rows than the declared shape");
        buffer_.resize(values.size() * 4);
        for (std::size_t i = 0; i < values.size(); ++i) detail::put_f32_le(buffer_.data() + 4 * i, static_cast<float>(values[i]));
        out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        if (!out_) detail::io_error(path_, "write failed");
    }

    void close() {
        if (written_ != rows_)
            cone_sampler::detail::fail(ErrorClass::internal, "row-count-mismatch",
                                       "wrote " + std::to_string(written_) + " of " + std::to_string(rows_) + " rows");
        out_.close();
        if (!out_) detail::io_error(path_, "close failed");
    }

private:
    std::filesystem::path path_;
    std::size_t rows_, cols_, written_ = 0;
    std::ofstream out_;
    std::vector<char> buffer_;
};

inline void write_matrix(const std::filesystem::path& path, std::size_t rows, std::size_t cols, std::span<const double> data) {
    NpyWriter w(path, rows, cols);
    w.append(data);
    w.close();
}

inline Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) detail::io_error(path, "cannot open for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 10 || std::memcmp(bytes.data(), detail::kMagic, detail::kMagicLen) != 0)
        detail::format_error("malformed-header", path, "missing NPY magic at byte offset 0");
    const int major = bytes[6];
    std::size_t header_len_bytes = major == 1 ? 2 : 4;
    if (major < 1 || major > 3) detail::format_error("unsupported-version", path, "NPY version " + std::to_string(major) + " at byte offset 6");
    if (bytes.size() < 8 + header_len_bytes) detail::format_error("malformed-header", path, "truncated header length at byte offset 8");
    const std::size_t header_len = detail::get_le(bytes.data() + 8, static_cast<int>(header_len_bytes));
    const std::size_t payload_offset = 8 + header_len_bytes + header_len;
    if (bytes.size() < payload_offset)
        detail::format_error("malformed-header", path, "header claims " + std::to_string(header_len) + " bytes but file ends at byte offset " + std::to_string(bytes.size()));
    const std::string_view dict(reinterpret_cast<const char*>(bytes.data()) + 8 + header_len_bytes, header_len);

    const auto descr = detail::dict_value(dict, "descr", path);
    std::size_t item = 0;
    if (descr == "'<f4'")
        item = 4;
    else if (descr == "'<f8'")
        item = 8;
    else
        detail::format_error("unsupported-dtype", path, "dtype " + std::string(descr) + " (expected '<f4' or '<f8')");
    if (detail::dict_value(dict, "fortran_order", path) != "False")
        detail::format_error("unsupported-layout", path, "fortran_order arrays are not supported");

    const auto shape = detail::parse_shape(detail::dict_value(dict, "shape", path));
    if (shape.size() != 2)
        detail::format_error("malformed-header", path, "shape must be a 2-tuple, got " + std::string(detail::dict_value(dict, "shape", path)));
    Matrix m;
    m.rows = shape[0];
    m.cols = shape[1];

    const std::size_t expected = m.rows * m.cols * item;
    const std::size_t actual = bytes.size() - payload_offset;
    if (actual != expected)
        detail::format_error("payload-size-mismatch", path,
                             "shape (" + std::to_string(m.rows) + ", " + std::to_string(m.cols) + ") needs " + std::to_string(expected) +
                                 " payload bytes from offset " + std::to_string(payload_offset) + ", found " + std::to_string(actual));

    m.data.resize(m.rows * m.cols);
    const unsigned char* p = bytes.data() + payload_offset;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const std::uint64_t raw = detail::get_le(p + i * item, static_cast<int>(item));
        const double v = item == 4 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)))
                                   : std::bit_cast<double>(raw);
        if (!std::isfinite(v))
            detail::format_error("non-finite", path, "non-finite value at byte offset " + std::to_string(payload_offset + i * item));
        m.data[i] = v;
    }
    return m;
}

inline std::vector<std::int64_t> read_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) detail::io_error(path, "cannot open for reading");
    std::vector<std::int64_t> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (line.empty() || ec != std::errc{} || p != line.data() + line.size())
            detail::format_error("malformed-label", path, "line " + std::to_string(line_no) + " is not a base-10 integer");
        labels.push_back(v);
    }
    return labels;
}

inline void write_labels(const std::filesystem::path& path, std::span<const std::int64_t> labels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) detail::io_error(path, "cannot open for writing");
    for (auto l : labels) out << l << '\n';
    if (!out) detail::io_error(path, "write failed");
}

/// Reads an embedding matrix and its label file. Rows are renormalized in
/// double precision to absorb float32 quantization.
inline LabeledEmbeddingSet read_embeddings(const std::filesystem::path& npy, const std::filesystem::path& labels_path) {
    const auto m = read_matrix(npy);
    if (m.cols < 2) detail::format_error("dimension-too-small", npy, "embedding dimension must be at least 2, got " + std::to_string(m.cols));
    auto labels = read_labels(labels_path);
    if (labels.size() != m.rows)
        detail::format_error("label-count-mismatch", labels_path,
                             std::to_string(labels.size()) + " labels for " + std::to_string(m.rows) + " embeddings");
    if (m.rows == 0) detail::format_error("empty-dataset", npy, "no embeddings");
    std::vector<double> data(m.data.size());
    for (std::size_t i = 0; i < m.rows; ++i) {
        const auto r = m.row(i);
        const double n = norm(r);
        if (!(n > 0.0)) detail::format_error("zero-norm", npy, "row " + std::to_string(i) + " has zero norm");
        for (std::size_t k = 0; k < m.cols; ++k) data[i * m.cols + k] = r[k] / n;
    }
    return LabeledEmbeddingSet(m.cols, std::move(data), std::move(labels));
}

inline void write_embeddings(const LabeledEmbeddingSet& data, const std::filesystem::path& npy,
                             const std::filesystem::path& labels_path) {
    if (data.empty()) cone_sampler::detail::fail(ErrorClass::usage, "empty-dataset", "refusing to write an empty dataset");
    write_matrix(npy, data.size(), data.dim(), data.data());
    write_labels(labels_path, data.labels());
}

/// Reference identities from an NPY matrix; ids are row indices.
inline IdentitySet read_identity_set(const std::filesystem::path& npy, unsigned threads = 0) {
    const auto m = read_matrix(npy);
    if (m.cols < 2) detail::format_error("dimension-too-small", npy, "embedding dimension must be at least 2, got " + std::to_string(m.cols));
    if (m.rows == 0) detail::format_error("empty-dataset", npy, "no reference vectors");
    std::vector<UnitVector> vs;
    vs.reserve(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) vs.push_back(normalize(m.row(i)));
    return IdentitySet(std::move(vs), {}, threads);
}

inline void write_identity_set(const IdentitySet& set, const std::filesystem::path& npy) {
    NpyWriter w(npy, set.size(), set.dim());
    for (const auto& v : set.vectors()) w.append(v.components());
    w.close();
}

inline AttributeTable read_attributes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) detail::io_error(path, "cannot open for reading");
    std::string line;
    if (!std::getline(in, line)) detail::format_error("malformed-attributes", path, "missing header row");
    const auto names = detail::split_csv_line(line);
    std::vector<std::vector<std::string>> columns(names.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != names.size())
            detail::format_error("malformed-attributes", path,
                                 "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " cells, header has " +
                                     std::to_string(names.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) columns[c].push_back(std::move(cells[c]));
    }
    AttributeTable table;
    for (std::size_t c = 0; c < names.size(); ++c) {
        std::vector<double> numeric(columns[c].size());
        bool all_numeric = !columns[c].empty();
        for (std::size_t r = 0; r < columns[c].size() && all_numeric; ++r) all_numeric = detail::parse_double(columns[c][r], numeric[r]);
        if (all_numeric)
            table.add_continuous(names[c], std::move(numeric));
        else
            table.add_discrete(names[c], std::move(columns[c]));
    }
    return table;
}

}  // namespace cone_sampler::io
