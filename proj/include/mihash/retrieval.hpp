#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mihash/encoder.hpp"
#include "mihash/error.hpp"

namespace mihash {

/// Sorted, duplicate-free label ids of one sample.
using LabelSet = std::vector<std::uint32_t>;

inline LabelSet make_label_set(std::vector<std::uint32_t> labels) {
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

/// Relevance: the label sets share at least one label.
inline bool shares_label(const LabelSet& a, const LabelSet& b) noexcept {
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia == *ib) return true;
        if (*ia < *ib) ++ia;
        else ++ib;
    }
    return false;
}

inline std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    detail::require(a.size() == b.size(), "dimension_mismatch", "hamming distance of codes with different lengths");
    std::uint32_t d = 0;
    for (std::size_t w = 0; w < a.size(); ++w) d += static_cast<std::uint32_t>(std::popcount(a[w] ^ b[w]));
    return d;
}

class HammingIndex {
public:
    HammingIndex(PackedCodes database, std::vector<std::uint64_t> ids,
                 std::optional<std::vector<LabelSet>> labels = std::nullopt)
        : database_(std::move(database)), ids_(std::move(ids)), labels_(std::move(labels)) {
        detail::require(ids_.size() == database_.rows(), "dimension_mismatch", "one id per database row required");
        std::vector<std::uint64_t> sorted = ids_;
        std::sort(sorted.begin(), sorted.end());
        detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "duplicate_id",
                        "database ids must be unique");
        ids_ascending_ = std::is_sorted(ids_.begin(), ids_.end());
        if (labels_)
            detail::require(labels_->size() == database_.rows(), "dimension_mismatch",
                            "one label set per database row required");
    }

    /// Rows numbered 0..N-1 as ids.
    static HammingIndex with_row_ids(PackedCodes database, std::optional<std::vector<LabelSet>> labels = std::nullopt) {
        std::vector<std::uint64_t> ids(database.rows());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
        return HammingIndex(std::move(database), std::move(ids), std::move(labels));
    }

    const PackedCodes& database() const noexcept { return database_; }
    const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }
    bool has_labels() const noexcept { return labels_.has_value(); }
    const std::vector<LabelSet>& labels() const {
        detail::require(labels_.has_value(), "no_labels", "index has no labels");
        return *labels_;
    }
    std::size_t size() const noexcept { return database_.rows(); }

    /// Row positions of the `k` nearest rows ordered by (distance, id).
    std::vector<std::size_t> ranked_rows(std::span<const std::uint64_t> query, std::size_t k) const {
        detail::require(query.size() == database_.words_per_row(), "dimension_mismatch",
                        "query code length does not match the index");
        k = std::min(k, size());
        std::vector<std::vector<std::size_t>> buckets(database_.bits() + 1);
        for (std::size_t r = 0; r < size(); ++r) buckets[hamming_distance(query, database_.row(r))].push_back(r);
        std::vector<std::size_t> out;
        out.reserve(k);
        for (auto& bucket : buckets) {
            if (out.size() >= k) break;
            if (!ids_ascending_)
                std::sort(bucket.begin(), bucket.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
            for (std::size_t r : bucket) {
                if (out.size() >= k) break;
                out.push_back(r);
            }
        }
        return out;
    }

private:
    PackedCodes database_;
    std::vector<std::uint64_t> ids_;
    std::optional<std::vector<LabelSet>> labels_;
    bool ids_ascending_ = true;
};

struct TopK {
    std::vector<std::uint64_t> ids;
    std::vector<std::uint32_t> distances;
    bool truncated = false;  // fewer than k rows in the database
};

inline TopK query_topk(const HammingIndex& index, std::span<const std::uint64_t> query, std::size_t k) {
    detail::require(k >= 1, "invalid_argument", "k must be at least 1");
    TopK out;
    out.truncated = k > index.size();
    for (std::size_t r : index.ranked_rows(query, k)) {
        out.ids.push_back(index.ids()[r]);
        out.distances.push_back(hamming_distance(query, index.database().row(r)));
    }
    return out;
}

namespace detail {

inline void check_eval_inputs(const HammingIndex& index, const PackedCodes& queries,
                              const std::vector<LabelSet>& query_labels) {
    require(index.has_labels(), "no_labels", "evaluation needs a labeled index");
    require(query_labels.size() == queries.rows(), "dimension_mismatch", "one label set per query required");
    require(queries.bits() == index.database().bits(), "dimension_mismatch", "query and database code lengths differ");
}

inline std::size_t count_relevant(const HammingIndex& index, const LabelSet& query_labels) {
    std::size_t n = 0;
    for (const auto& l : index.labels()) n += shares_label(l, query_labels) ? 1 : 0;
    return n;
}

}  // namespace detail

/// AP@k = sum_{r<=k} precision@r * rel(r) / min(k, #relevant); averaged over
/// queries that have at least one relevant database item.
inline double map_at_k(const HammingIndex& index, const PackedCodes& queries,
                       const std::vector<LabelSet>& query_labels, std::size_t k) {
    detail::check_eval_inputs(index, queries, query_labels);
    detail::require(k >= 1, "invalid_argument", "k must be at least 1");
    double sum_ap = 0.0;
    std::size_t evaluated = 0;
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const std::size_t relevant = detail::count_relevant(index, query_labels[q]);
        if (relevant == 0) continue;
        const auto ranked = index.ranked_rows(queries.row(q), k);
        double ap = 0.0;
        std::size_t hits = 0;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            if (!shares_label(index.labels()[ranked[r]], query_labels[q])) continue;
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
        sum_ap += ap / static_cast<double>(std::min(k, relevant));
        ++evaluated;
    }
    detail::require(evaluated > 0, "no_relevant", "no query has a relevant database item");
    return sum_ap / static_cast<double>(evaluated);
}

struct PrPoint {
    std::size_t rank = 0;  // cutoff
    double recall = 0.0;
    double precision = 0.0;
};

/// Precision and recall averaged over queries at rank cutoffs stride, 2*stride, ...,
/// always ending at the full database size.
inline std::vector<PrPoint> pr_curve(const HammingIndex& index, const PackedCodes& queries,
                                     const std::vector<LabelSet>& query_labels, std::size_t stride = 1) {
    detail::check_eval_inputs(index, queries, query_labels);
    detail::require(stride >= 1, "invalid_argument", "stride must be at least 1");
    const std::size_t n = index.size();
    std::vector<double> recall(n, 0.0);
    std::vector<double> precision(n, 0.0);
    std::size_t evaluated = 0;
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const std::size_t relevant = detail::count_relevant(index, query_labels[q]);
        if (relevant == 0) continue;
        const auto ranked = index.ranked_rows(queries.row(q), n);
        std::size_t hits = 0;
        for (std::size_t r = 0; r < n; ++r) {
            if (shares_label(index.labels()[ranked[r]], query_labels[q])) ++hits;
            recall[r] += static_cast<double>(hits) / static_cast<double>(relevant);
            precision[r] += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
        ++evaluated;
    }
    detail::require(evaluated > 0, "no_relevant", "no query has a relevant database item");
    std::vector<PrPoint> points;
    const double inv = 1.0 / static_cast<double>(evaluated);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t rank = r + 1;
        if (rank % stride != 0 && rank != n) continue;
        points.push_back({rank, recall[r] * inv, precision[r] * inv});
    }
    return points;
}

struct CodeCount {
    std::uint64_t key = 0;
    std::size_t count = 0;
    friend bool operator==(const CodeCount&, const CodeCount&) = default;
};

/// Key of a packed row: the word itself for K <= 64, otherwise FNV-1a over the words.
inline std::uint64_t code_key(std::span<const std::uint64_t> row) noexcept {
    if (row.size() == 1) return row[0];
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint64_t w : row)
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (w >> (8 * byte)) & 0xFFU;
            h *= 0x100000001b3ULL;
        }
    return h;
}

/// Count per distinct code, most used first (ties by key).
inline std::vector<CodeCount> utilization_histogram(const PackedCodes& codes) {
    std::unordered_map<std::uint64_t, std::size_t> counts;
    for (std::size_t r = 0; r < codes.rows(); ++r) ++counts[code_key(codes.row(r))];
    std::vector<CodeCount> out;
    out.reserve(counts.size());
    for (const auto& [key, count] : counts) out.push_back({key, count});
    std::sort(out.begin(), out.end(), [](const CodeCount& a, const CodeCount& b) {
        return a.count != b.count ? a.count > b.count : a.key < b.key;
    });
    return out;
}

inline std::vector<CodeCount> utilization_histogram(const CodeMatrix& codes) {
    return utilization_histogram(pack(codes));
}

struct EvalReport {
    double map_at_k = 0.0;
    std::size_t k = 0;
    std::vector<PrPoint> pr_points;
    std::vector<CodeCount> utilization;
};

inline EvalReport evaluate(const HammingIndex& index, const PackedCodes& queries,
                           const std::vector<LabelSet>& query_labels, std::size_t k, std::size_t pr_stride = 1) {
    return {map_at_k(index, queries, query_labels, k), k, pr_curve(index, queries, query_labels, pr_stride),
            utilization_histogram(index.database())};
}

}  // namespace mihash
