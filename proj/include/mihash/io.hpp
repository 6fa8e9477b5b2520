#pragma once

// File formats (all integers and floats little-endian):
//   features  "MIHF" u32 version=1, u32 N, u32 D, N*D float32 row-major
//   model     "MIH1" u32 D, u32 K, D*K float64 weights row-major, K float64 bias
//   codes     "MIHC" u32 N, u32 K, per row ceil(K/8) bytes, bit k of the row in
//             byte k/8 at position k%8, set for +1; padding bits zero
//   labels    text, one line per sample: "<id> <tok>,<tok>,..." (tokens optional)
//   config    text, "key = value" per line, '#' starts a comment

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mihash/encoder.hpp"
#include "mihash/error.hpp"
#include "mihash/retrieval.hpp"
#include "mihash/tensor.hpp"
#include "mihash/training.hpp"

namespace mihash::io {

inline constexpr std::array<char, 4> kFeatureMagic{'M', 'I', 'H', 'F'};
inline constexpr std::array<char, 4> kModelMagic{'M', 'I', 'H', '1'};
inline constexpr std::array<char, 4> kCodesMagic{'M', 'I', 'H', 'C'};
inline constexpr std::uint32_t kFeatureVersion = 1;

namespace detail {

using mihash::detail::fail;
using mihash::detail::require;

class ByteWriter {
public:
    void magic(const std::array<char, 4>& m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void byte(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
    const std::vector<char>& bytes() const noexcept { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    ByteReader(std::vector<char> bytes, std::string what) : bytes_(std::move(bytes)), what_(std::move(what)) {}

    void magic(const std::array<char, 4>& m) {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, m.data(), 4) != 0)
            fail("bad_magic", what_ + ": expected magic '" + std::string(m.begin(), m.end()) + "'");
        pos_ += 4;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::uint8_t byte() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    void expect_payload(std::uint64_t n) const {
        if (remaining() < n)
            fail("truncated", what_ + ": payload truncated (" + std::to_string(remaining()) + " of " +
                                  std::to_string(n) + " bytes)");
        if (remaining() > n) fail("trailing_bytes", what_ + ": unexpected bytes after payload");
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated", what_ + ": file truncated");
    }
    std::vector<char> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io_error", "cannot open '" + path + "'");
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("io_error", "cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("io_error", "write failed for '" + path + "'");
}

inline std::string read_text(const std::string& path) {
    const auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    require(v <= 0xFFFFFFFFULL, "size_overflow", std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

inline bool parse_double(std::string_view text, double& out) {
    const std::string s(trim(text));
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

inline bool parse_u64(std::string_view text, std::uint64_t& out) {
    text = trim(text);
    if (text.empty()) return false;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace detail

/// Shortest text that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

// --- features -------------------------------------------------------------

inline std::vector<char> encode_features(const Matrix& features) {
    detail::ByteWriter w;
    w.magic(kFeatureMagic);
    w.u32(kFeatureVersion);
    w.u32(detail::checked_u32(features.rows(), "N"));
    w.u32(detail::checked_u32(features.cols(), "D"));
    for (double v : features.data()) w.f32(static_cast<float>(v));
    return w.bytes();
}

inline Matrix decode_features(std::vector<char> bytes, const std::string& what = "features") {
    detail::ByteReader r(std::move(bytes), what);
    r.magic(kFeatureMagic);
    const std::uint32_t version = r.u32();
    detail::require(version == kFeatureVersion, "bad_version",
                    what + ": unsupported feature file version " + std::to_string(version));
    const std::uint64_t n = r.u32();
    const std::uint64_t d = r.u32();
    detail::require(n > 0, "empty_dataset", what + ": empty dataset");
    detail::require(d > 0, "empty_dataset", what + ": zero feature dimension");
    detail::require(n * d <= (~std::uint64_t{0}) / 8, "size_overflow", what + ": N*D overflows");
    r.expect_payload(n * d * 4);
    Matrix m(n, d);
    for (double& v : m.data()) {
        v = static_cast<double>(r.f32());
        detail::require(std::isfinite(v), "non_finite", what + ": feature values must be finite");
    }
    return m;
}

inline void save_features(const Matrix& features, const std::string& path) {
    detail::write_file(path, encode_features(features));
}

inline Matrix load_features(const std::string& path) { return decode_features(detail::read_file(path), path); }

/// Comma-separated fallback, one row per line; values are rounded to float32
/// like the binary format so both readers yield identical matrices.
inline Matrix parse_features_csv(const std::string& text, const std::string& what = "features.csv") {
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        const auto fields = detail::split(trimmed, ',');
        if (rows == 0) cols = fields.size();
        detail::require(fields.size() == cols, "ragged_csv",
                        what + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) + " values");
        for (auto f : fields) {
            double v = 0.0;
            detail::require(detail::parse_double(f, v), "bad_number",
                            what + ":" + std::to_string(line_no) + ": bad number '" + std::string(f) + "'");
            values.push_back(static_cast<double>(static_cast<float>(v)));
        }
        ++rows;
    }
    detail::require(rows > 0, "empty_dataset", what + ": empty dataset");
    return Matrix(rows, cols, std::move(values));
}

inline Matrix load_features_csv(const std::string& path) { return parse_features_csv(detail::read_text(path), path); }

/// Binary unless the path ends in ".csv".
inline Matrix load_features_any(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return load_features_csv(path);
    return load_features(path);
}

// --- model ----------------------------------------------------------------

inline std::vector<char> encode_model(const HashModel& model) {
    model.validate();
    detail::ByteWriter w;
    w.magic(kModelMagic);
    w.u32(detail::checked_u32(model.feature_dim(), "D"));
    w.u32(detail::checked_u32(model.code_len(), "K"));
    for (double v : model.weights.data()) w.f64(v);
    for (double v : model.bias) w.f64(v);
    return w.bytes();
}

inline HashModel decode_model(std::vector<char> bytes, const std::string& what = "model") {
    detail::ByteReader r(std::move(bytes), what);
    r.magic(kModelMagic);
    const std::uint64_t d = r.u32();
    const std::uint64_t k = r.u32();
    detail::require(d > 0 && k > 0, "bad_header", what + ": zero model dimension");
    r.expect_payload((d * k + k) * 8);
    HashModel model{Matrix(d, k), std::vector<double>(k)};
    for (double& v : model.weights.data()) v = r.f64();
    for (double& v : model.bias) v = r.f64();
    model.validate();
    return model;
}

inline void save_model(const HashModel& model, const std::string& path) {
    detail::write_file(path, encode_model(model));
}

inline HashModel load_model(const std::string& path) { return decode_model(detail::read_file(path), path); }

// --- codes ----------------------------------------------------------------

inline std::vector<char> encode_codes(const PackedCodes& codes) {
    detail::ByteWriter w;
    w.magic(kCodesMagic);
    w.u32(detail::checked_u32(codes.rows(), "N"));
    w.u32(detail::checked_u32(codes.bits(), "K"));
    const std::size_t bytes_per_row = (codes.bits() + 7) / 8;
    for (std::size_t r = 0; r < codes.rows(); ++r) {
        auto words = codes.row(r);
        for (std::size_t b = 0; b < bytes_per_row; ++b)
            w.byte(static_cast<std::uint8_t>((words[b / 8] >> (8 * (b % 8))) & 0xFFU));
    }
    return w.bytes();
}

inline PackedCodes decode_codes(std::vector<char> bytes, const std::string& what = "codes") {
    detail::ByteReader r(std::move(bytes), what);
    r.magic(kCodesMagic);
    const std::uint64_t n = r.u32();
    const std::uint64_t k = r.u32();
    detail::require(k > 0, "bad_header", what + ": zero code length");
    const std::uint64_t bytes_per_row = (k + 7) / 8;
    r.expect_payload(n * bytes_per_row);
    PackedCodes codes(n, k);
    const std::uint64_t mask = codes.tail_mask();
    for (std::size_t row = 0; row < n; ++row) {
        auto words = codes.row(row);
        for (std::size_t b = 0; b < bytes_per_row; ++b)
            words[b / 8] |= static_cast<std::uint64_t>(r.byte()) << (8 * (b % 8));
        detail::require((words.back() & ~mask) == 0, "corrupt_codes",
                        what + ": padding bits set in row " + std::to_string(row));
    }
    return codes;
}

inline void save_codes(const PackedCodes& codes, const std::string& path) {
    detail::write_file(path, encode_codes(codes));
}

inline PackedCodes load_codes(const std::string& path) { return decode_codes(detail::read_file(path), path); }

// --- labels ---------------------------------------------------------------

/// Interns label tokens to dense ids in first-seen order.
class LabelVocabulary {
public:
    std::uint32_t intern(std::string_view token) {
        auto it = ids_.find(std::string(token));
        if (it != ids_.end()) return it->second;
        const auto id = static_cast<std::uint32_t>(tokens_.size());
        tokens_.emplace_back(token);
        ids_.emplace(tokens_.back(), id);
        return id;
    }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<std::string> tokens_;
};

struct LabelFile {
    std::vector<std::string> sample_ids;
    std::vector<LabelSet> labels;
};

inline LabelFile parse_labels(const std::string& text, LabelVocabulary& vocab, const std::string& what = "labels") {
    LabelFile out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const auto gap = trimmed.find_first_of(" \t");
        const auto id = trimmed.substr(0, gap);
        std::vector<std::uint32_t> ids;
        if (gap != std::string_view::npos) {
            for (auto tok : detail::split(detail::trim(trimmed.substr(gap)), ',')) {
                tok = detail::trim(tok);
                detail::require(!tok.empty(), "bad_label",
                                what + ":" + std::to_string(line_no) + ": empty label token");
                ids.push_back(vocab.intern(tok));
            }
        }
        out.sample_ids.emplace_back(id);
        out.labels.push_back(make_label_set(std::move(ids)));
    }
    return out;
}

inline LabelFile load_labels(const std::string& path, LabelVocabulary& vocab, std::size_t expected_rows) {
    LabelFile labels = parse_labels(detail::read_text(path), vocab, path);
    detail::require(labels.labels.size() == expected_rows, "dimension_mismatch",
                    path + ": " + std::to_string(labels.labels.size()) + " label lines for " +
                        std::to_string(expected_rows) + " samples");
    return labels;
}

inline std::string format_labels(const std::vector<std::uint32_t>& per_row_label) {
    std::string out;
    for (std::size_t i = 0; i < per_row_label.size(); ++i)
        out += std::to_string(i) + " " + std::to_string(per_row_label[i]) + "\n";
    return out;
}

// --- config ---------------------------------------------------------------

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

inline ConfigEntries parse_key_values(const std::string& text, const std::string& what = "config") {
    ConfigEntries entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = detail::trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        detail::require(eq != std::string_view::npos, "bad_config",
                        what + ":" + std::to_string(line_no) + ": expected key=value");
        entries.emplace_back(std::string(detail::trim(view.substr(0, eq))),
                             std::string(detail::trim(view.substr(eq + 1))));
    }
    return entries;
}

/// Defaults, then file entries, then overrides. beta falls back to the
/// per-code-length default when neither source sets it.
inline TrainConfig parse_config(const std::string& file_text, const std::vector<std::string>& overrides = {}) {
    ConfigEntries entries = parse_key_values(file_text);
    for (const auto& o : overrides) {
        auto parsed = parse_key_values(o, "override");
        detail::require(parsed.size() == 1, "bad_config", "override '" + o + "' is not a single key=value");
        entries.push_back(std::move(parsed.front()));
    }

    TrainConfig config;
    bool beta_set = false;
    auto as_double = [](const std::string& key, const std::string& value) {
        double v = 0.0;
        detail::require(detail::parse_double(value, v), "invalid_config", key + ": '" + value + "' is not a number");
        return v;
    };
    auto as_count = [](const std::string& key, const std::string& value) {
        std::uint64_t v = 0;
        detail::require(detail::parse_u64(value, v), "invalid_config",
                        key + ": '" + value + "' is not a non-negative integer");
        return v;
    };
    for (const auto& [key, value] : entries) {
        if (key == "code_len") config.code_len = as_count(key, value);
        else if (key == "batch_size") config.batch_size = as_count(key, value);
        else if (key == "lr") config.lr = as_double(key, value);
        else if (key == "alpha") config.alpha = as_double(key, value);
        else if (key == "beta") { config.beta = as_double(key, value); beta_set = true; }
        else if (key == "epochs") config.epochs = as_count(key, value);
        else if (key == "lr_decay_every") config.lr_decay_every = as_count(key, value);
        else if (key == "lr_decay_factor") config.lr_decay_factor = as_double(key, value);
        else if (key == "momentum") config.momentum = as_double(key, value);
        else if (key == "weight_decay") config.weight_decay = as_double(key, value);
        else if (key == "seed") config.seed = as_count(key, value);
        else if (key == "shuffle_iters") config.shuffle_iters = as_count(key, value);
        else if (key == "similarity") {
            if (value == "hidden") config.similarity = SimilaritySource::hidden;
            else if (value == "features") config.similarity = SimilaritySource::features;
            else detail::fail("invalid_config", key + ": '" + value + "' is not hidden or features");
        }
        else detail::fail("unknown_key", "unknown config key '" + key + "'");
    }
    if (!beta_set) config.beta = default_beta(config.code_len);
    config.validate();
    return config;
}

inline std::string dump_config(const TrainConfig& c) {
    std::string out;
    auto line = [&out](const char* key, const std::string& value) { out += std::string(key) + " = " + value + "\n"; };
    line("code_len", std::to_string(c.code_len));
    line("batch_size", std::to_string(c.batch_size));
    line("lr", format_double(c.lr));
    line("alpha", format_double(c.alpha));
    line("beta", format_double(c.beta));
    line("epochs", std::to_string(c.epochs));
    line("lr_decay_every", std::to_string(c.lr_decay_every));
    line("lr_decay_factor", format_double(c.lr_decay_factor));
    line("momentum", format_double(c.momentum));
    line("weight_decay", format_double(c.weight_decay));
    line("seed", std::to_string(c.seed));
    line("shuffle_iters", std::to_string(c.shuffle_iters));
    line("similarity", c.similarity == SimilaritySource::features ? "features" : "hidden");
    return out;
}

inline TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    return parse_config(path.empty() ? std::string() : detail::read_text(path), overrides);
}

// --- CSV outputs ----------------------------------------------------------

inline std::string log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,lr,L_m,L_sim,L_reg,distinct_codes\n";
    for (const auto& e : log)
        out += std::to_string(e.epoch) + "," + format_double(e.lr) + "," + format_double(e.mi) + "," +
               format_double(e.sim) + "," + format_double(e.reg) + "," + std::to_string(e.distinct_codes) + "\n";
    return out;
}

inline void write_text(const std::string& path, const std::string& text) {
    detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace mihash::io
