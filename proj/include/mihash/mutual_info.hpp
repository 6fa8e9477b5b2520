#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mihash/encoder.hpp"
#include "mihash/error.hpp"
#include "mihash/tensor.hpp"

namespace mihash {

/// Cells of the 2x2 joint table of a bit pair (i, j). "Set" means the bit is +1.
enum class Cell : int {
    both = 0,     // B_i, B_j
    only_i = 1,   // B_i, not B_j
    only_j = 2,   // not B_i, B_j
    neither = 3,  // not B_i, not B_j
};

inline constexpr std::array<Cell, 4> kAllCells{Cell::both, Cell::only_i, Cell::only_j, Cell::neither};

inline constexpr Cell cell_of(bool bit_i, bool bit_j) noexcept {
    return bit_i ? (bit_j ? Cell::both : Cell::only_i) : (bit_j ? Cell::only_j : Cell::neither);
}

/// Same event seen from the (j, i) orientation.
inline constexpr Cell transpose(Cell c) noexcept {
    switch (c) {
        case Cell::only_i: return Cell::only_j;
        case Cell::only_j: return Cell::only_i;
        default: return c;
    }
}

inline constexpr bool cell_has_i(Cell c) noexcept { return c == Cell::both || c == Cell::only_i; }
inline constexpr bool cell_has_j(Cell c) noexcept { return c == Cell::both || c == Cell::only_j; }

using JointTable = std::array<double, 4>;  // indexed by Cell

/// Empirical bit marginals and pairwise joint tables over a code set.
/// Probabilities are exact count ratios, so every table sums to one and
/// agrees with the marginals up to rounding.
class PairStats {
public:
    PairStats() = default;

    /// From raw counts. `ones[i]` samples have bit i set; `joint_counts`
    /// holds the upper triangle (i < j) in row-major order.
    PairStats(std::size_t n_samples, std::vector<std::uint64_t> ones,
              std::vector<std::array<std::uint64_t, 4>> joint_counts)
        : n_(n_samples), bits_(ones.size()), ones_(std::move(ones)), joint_counts_(std::move(joint_counts)) {
        detail::require(n_ > 0, "empty_dataset", "pair statistics need at least one sample");
        detail::require(joint_counts_.size() == bits_ * (bits_ - 1) / 2, "dimension_mismatch",
                        "joint count table does not match bit count");
        const double inv = 1.0 / static_cast<double>(n_);
        marginals_.resize(bits_);
        for (std::size_t i = 0; i < bits_; ++i) marginals_[i] = static_cast<double>(ones_[i]) * inv;
        joints_.resize(joint_counts_.size());
        for (std::size_t p = 0; p < joints_.size(); ++p)
            for (std::size_t c = 0; c < 4; ++c) joints_[p][c] = static_cast<double>(joint_counts_[p][c]) * inv;
    }

    std::size_t n_samples() const noexcept { return n_; }
    std::size_t bits() const noexcept { return bits_; }

    /// P(B_i = +1)
    double marginal(std::size_t i) const noexcept { return marginals_[i]; }
    const std::vector<double>& marginals() const noexcept { return marginals_; }

    /// Joint table oriented as (i, j); any i != j.
    JointTable joint(std::size_t i, std::size_t j) const {
        detail::require(i != j && i < bits_ && j < bits_, "invalid_argument", "joint() needs two distinct bits");
        if (i < j) return joints_[pair_index(i, j)];
        const JointTable& t = joints_[pair_index(j, i)];
        return {t[0], t[2], t[1], t[3]};
    }

    double joint(std::size_t i, std::size_t j, Cell c) const { return joint(i, j)[static_cast<int>(c)]; }

    std::uint64_t count(std::size_t i, std::size_t j, Cell c) const {
        if (i < j) return joint_counts_[pair_index(i, j)][static_cast<int>(c)];
        return joint_counts_[pair_index(j, i)][static_cast<int>(transpose(c))];
    }

    /// P(x) for the i-side of `c` times P(y) for the j-side.
    double marginal_product(std::size_t i, std::size_t j, Cell c) const noexcept {
        const double pi = cell_has_i(c) ? marginals_[i] : 1.0 - marginals_[i];
        const double pj = cell_has_j(c) ? marginals_[j] : 1.0 - marginals_[j];
        return pi * pj;
    }

    /// Signed association P(B_i, B_j) - P(B_i) P(B_j).
    double association(std::size_t i, std::size_t j) const {
        return joint(i, j, Cell::both) - marginals_[i] * marginals_[j];
    }

    std::size_t pair_index(std::size_t i, std::size_t j) const noexcept {
        // rows 0..i-1 contribute (bits-1) + (bits-2) + ... entries
        return i * bits_ - i * (i + 1) / 2 + (j - i - 1);
    }

private:
    std::size_t n_ = 0;
    std::size_t bits_ = 0;
    std::vector<std::uint64_t> ones_;
    std::vector<std::array<std::uint64_t, 4>> joint_counts_;
    std::vector<double> marginals_;
    std::vector<JointTable> joints_;
};

/// Counts are taken column-wise: each bit becomes an N-bit bitset, and the
/// pair counts are popcounts of their intersections.
inline PairStats estimate_stats(const CodeMatrix& codes) {
    detail::require(codes.rows() >= 1, "empty_dataset", "cannot estimate statistics of an empty code set");
    detail::require(codes.bits() >= 2, "invalid_argument", "pair statistics need at least 2 bits");
    const std::size_t n = codes.rows();
    const std::size_t k = codes.bits();
    const std::size_t words = (n + 63) / 64;
    std::vector<std::vector<std::uint64_t>> columns(k, std::vector<std::uint64_t>(words, 0));
    for (std::size_t r = 0; r < n; ++r) {
        auto row = codes.row(r);
        for (std::size_t b = 0; b < k; ++b)
            if (row[b] > 0) columns[b][r / 64] |= std::uint64_t{1} << (r % 64);
    }
    std::vector<std::uint64_t> ones(k, 0);
    for (std::size_t b = 0; b < k; ++b)
        for (auto w : columns[b]) ones[b] += static_cast<std::uint64_t>(std::popcount(w));

    std::vector<std::array<std::uint64_t, 4>> joint;
    joint.reserve(k * (k - 1) / 2);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            std::uint64_t both = 0;
            for (std::size_t w = 0; w < words; ++w)
                both += static_cast<std::uint64_t>(std::popcount(columns[i][w] & columns[j][w]));
            const std::uint64_t only_i = ones[i] - both;
            const std::uint64_t only_j = ones[j] - both;
            joint.push_back({both, only_i, only_j, n - both - only_i - only_j});
        }
    }
    return PairStats(n, std::move(ones), std::move(joint));
}

/// Binary entropy of bit i in nats.
inline double entropy(const PairStats& stats, std::size_t i) {
    const double p = stats.marginal(i);
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
    return h;
}

/// I(B_i; B_j) in nats, with 0 ln 0 = 0.
inline double mutual_information(const PairStats& stats, std::size_t i, std::size_t j) {
    const JointTable t = stats.joint(i, j);
    double mi = 0.0;
    for (Cell c : kAllCells) {
        const double p = t[static_cast<int>(c)];
        if (p > 0.0) mi += p * std::log(p / stats.marginal_product(i, j, c));
    }
    // Rounding can leave a tiny negative value for independent pairs.
    return mi < 0.0 ? 0.0 : mi;
}

struct MiReport {
    double total = 0.0;  // sum over i < j, before any beta weighting
    Matrix per_pair;     // K x K, upper triangle filled
};

inline MiReport mi_report(const PairStats& stats) {
    const std::size_t k = stats.bits();
    MiReport report{0.0, Matrix(k, k)};
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const double mi = mutual_information(stats, i, j);
            report.per_pair(i, j) = mi;
            report.total += mi;
        }
    return report;
}

/// Triangular accumulation of pairwise mutual information.
inline double mi_loss(const PairStats& stats) { return mi_report(stats).total; }

/// Approximate dP(cell)/dB_i obtained by replacing the joint with the
/// product of marginals: +P(B_j), +(1-P(B_j)), -P(B_j), -(1-P(B_j)).
inline double approx_joint_derivative(const PairStats& stats, Cell cell, std::size_t i, std::size_t j) {
    detail::require(i != j, "invalid_argument", "derivative needs two distinct bits");
    const double pj = stats.marginal(j);
    const double other = cell_has_j(cell) ? pj : 1.0 - pj;
    return cell_has_i(cell) ? other : -other;
}

/// dI(B_i;B_j)/dP(cell) with marginals held fixed: ln(P(cell) / (P(x) P(y))) + 1.
inline double mi_cell_derivative(const PairStats& stats, Cell cell, std::size_t i, std::size_t j) {
    const double p = stats.joint(i, j, cell);
    detail::require(p > 0.0, "empty_cell", "MI derivative requested for an unobserved cell");
    return std::log(p / stats.marginal_product(i, j, cell)) + 1.0;
}

/// Per-sample gradient of the summed pairwise MI with respect to the codes.
/// Sample n, bit i receives, for every other bit j, the MI derivative of the
/// cell the sample occupies times the approximated joint derivative, scaled 1/N.
inline Matrix mi_gradient(const CodeMatrix& codes, const PairStats& stats) {
    detail::require(codes.bits() == stats.bits() && codes.rows() == stats.n_samples(), "dimension_mismatch",
                    "codes do not match the statistics they are differentiated against");
    const std::size_t k = codes.bits();
    const double inv_n = 1.0 / static_cast<double>(stats.n_samples());

    // weight[(i * k + j) * 4 + cell]: contribution to d/dB_i from pair (i, j).
    std::vector<double> weight(k * k * 4, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            for (Cell c : kAllCells) {
                if (stats.count(i, j, c) == 0) continue;
                weight[(i * k + j) * 4 + static_cast<std::size_t>(c)] =
                    mi_cell_derivative(stats, c, i, j) * approx_joint_derivative(stats, c, i, j) * inv_n;
            }
        }

    Matrix grad(codes.rows(), k);
    for (std::size_t n = 0; n < codes.rows(); ++n) {
        auto row = codes.row(n);
        auto out = grad.row(n);
        for (std::size_t i = 0; i < k; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                const Cell c = cell_of(row[i] > 0, row[j] > 0);
                acc += weight[(i * k + j) * 4 + static_cast<std::size_t>(c)];
            }
            out[i] = acc;
        }
    }
    return grad;
}

}  // namespace mihash
