#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mihash/error.hpp"
#include "mihash/tensor.hpp"

namespace mihash {

/// Single fully connected layer mapping D-dimensional features to K
/// continuous outputs; the hash code is the sign of those outputs.
struct HashModel {
    Matrix weights;             // D x K
    std::vector<double> bias;   // K

    std::size_t feature_dim() const noexcept { return weights.rows(); }
    std::size_t code_len() const noexcept { return weights.cols(); }

    void validate() const {
        detail::require(bias.size() == weights.cols(), "dimension_mismatch",
                        "bias length " + std::to_string(bias.size()) + " != code length " +
                            std::to_string(weights.cols()));
        detail::require(weights.all_finite(), "non_finite", "model weights contain NaN/Inf");
        for (double b : bias) detail::require(std::isfinite(b), "non_finite", "model bias contains NaN/Inf");
    }

    friend bool operator==(const HashModel&, const HashModel&) = default;
};

/// Fan-in uniform initialization: weights in [-1/sqrt(D), 1/sqrt(D)), zero bias.
inline HashModel init_model(std::size_t feature_dim, std::size_t code_len, SeededRng& rng) {
    detail::require(feature_dim > 0 && code_len > 0, "invalid_argument",
                    "model needs positive feature and code dimensions");
    const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    return HashModel{rand_uniform(rng, feature_dim, code_len, -bound, bound),
                     std::vector<double>(code_len, 0.0)};
}

/// N x K matrix of +1/-1 entries.
class CodeMatrix {
public:
    CodeMatrix() = default;
    CodeMatrix(std::size_t rows, std::size_t bits, std::int8_t fill = 1)
        : rows_(rows), bits_(bits), values_(rows * bits, fill) {
        detail::require(fill == 1 || fill == -1, "invalid_code", "code entries must be +1 or -1");
    }

    /// Sign of every entry of `hidden`, with sign(0) = +1.
    static CodeMatrix sign_of(const Matrix& hidden) {
        CodeMatrix codes(hidden.rows(), hidden.cols());
        auto src = hidden.data();
        for (std::size_t i = 0; i < src.size(); ++i) codes.values_[i] = src[i] < 0.0 ? -1 : 1;
        return codes;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t bits() const noexcept { return bits_; }

    std::int8_t operator()(std::size_t r, std::size_t k) const noexcept { return values_[r * bits_ + k]; }
    void set(std::size_t r, std::size_t k, std::int8_t v) {
        detail::require(v == 1 || v == -1, "invalid_code", "code entries must be +1 or -1");
        values_[r * bits_ + k] = v;
    }
    std::span<const std::int8_t> row(std::size_t r) const noexcept {
        return {values_.data() + r * bits_, bits_};
    }

    Matrix to_matrix() const {
        Matrix m(rows_, bits_);
        auto dst = m.data();
        for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = values_[i];
        return m;
    }

    CodeMatrix select_rows(std::span<const std::size_t> indices) const {
        CodeMatrix out(indices.size(), bits_);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            auto src = row(indices[i]);
            std::copy(src.begin(), src.end(), out.values_.begin() + static_cast<std::ptrdiff_t>(i * bits_));
        }
        return out;
    }

    friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t bits_ = 0;
    std::vector<std::int8_t> values_;
};

/// Bit-packed codes: bit k of a row lives in word k/64 at position k%64,
/// set when the code value is +1. Bits past K in the last word are zero.
class PackedCodes {
public:
    PackedCodes() = default;
    PackedCodes(std::size_t rows, std::size_t bits)
        : rows_(rows), bits_(bits), words_per_row_((bits + 63) / 64), words_(rows * words_per_row_, 0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t bits() const noexcept { return bits_; }
    std::size_t words_per_row() const noexcept { return words_per_row_; }

    std::span<const std::uint64_t> row(std::size_t r) const noexcept {
        return {words_.data() + r * words_per_row_, words_per_row_};
    }
    std::span<std::uint64_t> row(std::size_t r) noexcept {
        return {words_.data() + r * words_per_row_, words_per_row_};
    }

    bool bit(std::size_t r, std::size_t k) const noexcept {
        return (words_[r * words_per_row_ + k / 64] >> (k % 64)) & 1U;
    }

    /// Mask of valid bits in the last word of a row.
    std::uint64_t tail_mask() const noexcept {
        const std::size_t rem = bits_ % 64;
        return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
    }

    bool padding_clear() const noexcept {
        if (words_per_row_ == 0) return true;
        const std::uint64_t mask = tail_mask();
        for (std::size_t r = 0; r < rows_; ++r)
            if (row(r).back() & ~mask) return false;
        return true;
    }

    friend bool operator==(const PackedCodes&, const PackedCodes&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t bits_ = 0;
    std::size_t words_per_row_ = 0;
    std::vector<std::uint64_t> words_;
};

struct ForwardResult {
    Matrix hidden;     // H, continuous pre-binarization outputs
    CodeMatrix codes;  // B = sign(H)
};

/// Continuous outputs only: features * weights + bias.
inline Matrix project(const HashModel& model, const Matrix& features) {
    detail::require(features.cols() == model.feature_dim(), "dimension_mismatch",
                    "features have " + std::to_string(features.cols()) + " columns, model expects " +
                        std::to_string(model.feature_dim()));
    Matrix hidden = matmul(features, model.weights);
    for (std::size_t r = 0; r < hidden.rows(); ++r) {
        auto row = hidden.row(r);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] += model.bias[k];
    }
    return hidden;
}

inline ForwardResult forward(const HashModel& model, const Matrix& features) {
    Matrix hidden = project(model, features);
    CodeMatrix codes = CodeMatrix::sign_of(hidden);
    return {std::move(hidden), std::move(codes)};
}

/// Straight-through estimator: the sign is treated as identity on the way back.
inline Matrix backward_straight_through(const Matrix& grad_codes) { return grad_codes; }

struct LinearGrads {
    Matrix weights;
    std::vector<double> bias;
};

inline LinearGrads backward_linear(const Matrix& grad_hidden, const Matrix& features) {
    detail::require(grad_hidden.rows() == features.rows(), "dimension_mismatch",
                    "gradient has " + std::to_string(grad_hidden.rows()) + " rows, features have " +
                        std::to_string(features.rows()));
    return {matmul_transposed_lhs(features, grad_hidden), column_sums(grad_hidden)};
}

inline PackedCodes pack(const CodeMatrix& codes) {
    PackedCodes packed(codes.rows(), codes.bits());
    for (std::size_t r = 0; r < codes.rows(); ++r) {
        auto words = packed.row(r);
        auto values = codes.row(r);
        for (std::size_t k = 0; k < values.size(); ++k)
            if (values[k] > 0) words[k / 64] |= std::uint64_t{1} << (k % 64);
    }
    return packed;
}

inline CodeMatrix unpack(const PackedCodes& packed) {
    CodeMatrix codes(packed.rows(), packed.bits());
    for (std::size_t r = 0; r < packed.rows(); ++r)
        for (std::size_t k = 0; k < packed.bits(); ++k) codes.set(r, k, packed.bit(r, k) ? 1 : -1);
    return codes;
}

/// Number of distinct rows.
inline std::size_t count_distinct_codes(const PackedCodes& packed) {
    std::vector<std::span<const std::uint64_t>> rows;
    rows.reserve(packed.rows());
    for (std::size_t r = 0; r < packed.rows(); ++r) rows.push_back(packed.row(r));
    const auto less = [](auto a, auto b) { return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()); };
    const auto equal = [](auto a, auto b) { return std::equal(a.begin(), a.end(), b.begin(), b.end()); };
    std::sort(rows.begin(), rows.end(), less);
    return static_cast<std::size_t>(std::unique(rows.begin(), rows.end(), equal) - rows.begin());
}

inline std::size_t count_distinct_codes(const CodeMatrix& codes) { return count_distinct_codes(pack(codes)); }

}  // namespace mihash
