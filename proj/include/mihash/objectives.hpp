#pragma once

#include <cmath>
#include <span>

#include "mihash/encoder.hpp"
#include "mihash/error.hpp"
#include "mihash/tensor.hpp"

namespace mihash {

struct LossValue {
    double value = 0.0;
    Matrix grad_hidden;  // dL/dH, straight-through contributions from B included
};

/// Added to vector norms inside the losses so collapsed rows of H do not divide by zero.
inline constexpr double kNormGuard = 1e-12;

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    detail::require(a.size() == b.size(), "dimension_mismatch", "cosine of vectors with different lengths");
    const double na = norm(a);
    const double nb = norm(b);
    detail::require(na > 0.0 && nb > 0.0, "zero_norm", "cosine similarity of a zero vector");
    return dot(a, b) / (na * nb);
}

namespace detail {

// Guarded cosine and its gradient with respect to each argument.
struct CosineTerms {
    double value;
    double scale_a;  // d/da = b * inv_prod - scale_a * a
    double scale_b;  // d/db = a * inv_prod - scale_b * b
    double inv_prod;
};

inline CosineTerms guarded_cosine(std::span<const double> a, std::span<const double> b) {
    const double raw_a = norm(a);
    const double raw_b = norm(b);
    const double na = raw_a + kNormGuard;
    const double nb = raw_b + kNormGuard;
    const double inv_prod = 1.0 / (na * nb);
    const double value = dot(a, b) * inv_prod;
    return {value, raw_a > 0.0 ? value / (na * raw_a) : 0.0, raw_b > 0.0 ? value / (nb * raw_b) : 0.0,
            inv_prod};
}

inline void add_cosine_grad(std::span<double> grad_a, std::span<double> grad_b, std::span<const double> a,
                            std::span<const double> b, const CosineTerms& t, double weight) {
    for (std::size_t k = 0; k < a.size(); ++k) {
        grad_a[k] += weight * (b[k] * t.inv_prod - t.scale_a * a[k]);
        grad_b[k] += weight * (a[k] * t.inv_prod - t.scale_b * b[k]);
    }
}

}  // namespace detail

/// Mean over all unordered pairs (m, n) of (cos(H_m, H_n) - cos(B_m, B_n))^2.
/// `codes` is taken as a real matrix so the same routine evaluates relaxed
/// codes; gradients reach H both directly and through B via straight-through.
inline LossValue sim_loss(const Matrix& hidden, const Matrix& codes) {
    detail::require(hidden.same_shape(codes), "dimension_mismatch",
                    "sim_loss: H is " + shape_string(hidden) + ", B is " + shape_string(codes));
    const std::size_t n = hidden.rows();
    detail::require(n >= 2, "batch_too_small", "sim_loss needs at least 2 samples");

    const double pairs = static_cast<double>(n * (n - 1) / 2);
    Matrix grad_h(hidden.rows(), hidden.cols());
    Matrix grad_b(codes.rows(), codes.cols());
    double total = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t q = m + 1; q < n; ++q) {
            const auto ch = detail::guarded_cosine(hidden.row(m), hidden.row(q));
            const auto cb = detail::guarded_cosine(codes.row(m), codes.row(q));
            const double diff = ch.value - cb.value;
            total += diff * diff;
            const double w = 2.0 * diff / pairs;
            detail::add_cosine_grad(grad_h.row(m), grad_h.row(q), hidden.row(m), hidden.row(q), ch, w);
            detail::add_cosine_grad(grad_b.row(m), grad_b.row(q), codes.row(m), codes.row(q), cb, -w);
        }
    }
    const Matrix through = backward_straight_through(grad_b);
    auto gh = grad_h.data();
    auto gt = through.data();
    for (std::size_t i = 0; i < gh.size(); ++i) gh[i] += gt[i];
    return {total / pairs, std::move(grad_h)};
}

/// Same pairwise loss against a fixed similarity source (e.g. the input
/// features): mean of (cos(T_m, T_n) - cos(B_m, B_n))^2, gradient through B only.
inline LossValue sim_loss_to_target(const Matrix& target, const Matrix& hidden, const Matrix& codes) {
    detail::require(hidden.same_shape(codes), "dimension_mismatch",
                    "sim_loss: H is " + shape_string(hidden) + ", B is " + shape_string(codes));
    detail::require(target.rows() == codes.rows(), "dimension_mismatch", "sim_loss: target rows differ from B rows");
    const std::size_t n = codes.rows();
    detail::require(n >= 2, "batch_too_small", "sim_loss needs at least 2 samples");

    const double pairs = static_cast<double>(n * (n - 1) / 2);
    Matrix grad_b(codes.rows(), codes.cols());
    double total = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t q = m + 1; q < n; ++q) {
            const double ct = detail::guarded_cosine(target.row(m), target.row(q)).value;
            const auto cb = detail::guarded_cosine(codes.row(m), codes.row(q));
            const double diff = ct - cb.value;
            total += diff * diff;
            detail::add_cosine_grad(grad_b.row(m), grad_b.row(q), codes.row(m), codes.row(q), cb, -2.0 * diff / pairs);
        }
    }
    return {total / pairs, backward_straight_through(grad_b)};
}

inline LossValue sim_loss(const Matrix& hidden, const CodeMatrix& codes) {
    return sim_loss(hidden, codes.to_matrix());
}

/// Mean over samples of ||H_n - B_n||^2, with B held constant.
inline LossValue reg_loss(const Matrix& hidden, const Matrix& codes) {
    detail::require(hidden.same_shape(codes), "dimension_mismatch",
                    "reg_loss: H is " + shape_string(hidden) + ", B is " + shape_string(codes));
    detail::require(hidden.rows() >= 1, "batch_too_small", "reg_loss needs at least 1 sample");
    const double inv_n = 1.0 / static_cast<double>(hidden.rows());
    Matrix grad(hidden.rows(), hidden.cols());
    double total = 0.0;
    auto h = hidden.data();
    auto b = codes.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double d = h[i] - b[i];
        total += d * d;
        g[i] = 2.0 * d * inv_n;
    }
    return {total * inv_n, std::move(grad)};
}

inline LossValue reg_loss(const Matrix& hidden, const CodeMatrix& codes) {
    return reg_loss(hidden, codes.to_matrix());
}

struct CombinedLoss {
    double sim = 0.0;
    double reg = 0.0;
    double value = 0.0;  // sim + alpha * reg
    Matrix grad_hidden;
};

/// L_sim + alpha * L_reg. With `target` set, L_sim compares code cosines
/// against the target rows instead of against H.
inline CombinedLoss combined_loss(const Matrix& hidden, const CodeMatrix& codes, double alpha,
                                  const Matrix* target = nullptr) {
    detail::require(alpha >= 0.0, "invalid_argument", "alpha must be non-negative");
    const Matrix b = codes.to_matrix();
    LossValue sim = target != nullptr ? sim_loss_to_target(*target, hidden, b) : sim_loss(hidden, b);
    const LossValue reg = reg_loss(hidden, b);
    auto g = sim.grad_hidden.data();
    auto gr = reg.grad_hidden.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * gr[i];
    return {sim.value, reg.value, sim.value + alpha * reg.value, std::move(sim.grad_hidden)};
}

}  // namespace mihash
