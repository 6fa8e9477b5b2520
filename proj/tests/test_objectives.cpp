#include <gtest/gtest.h>

#include <cmath>

#include "mihash/objectives.hpp"

using namespace mihash;

namespace {

double cos_naive(std::span<const double> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double sim_naive(const Matrix& h, const Matrix& b) {
    double total = 0.0;
    int pairs = 0;
    for (std::size_t m = 0; m < h.rows(); ++m)
        for (std::size_t n = m + 1; n < h.rows(); ++n) {
            const double d = cos_naive(h.row(m), h.row(n)) - cos_naive(b.row(m), b.row(n));
            total += d * d;
            ++pairs;
        }
    return total / pairs;
}

// sim loss seen as a function of H alone, with B = B0 + (H - H0): the
// straight-through reading of the sign inside a small neighbourhood.
double sim_surrogate(const Matrix& h, const Matrix& h0, const Matrix& b0) {
    Matrix b = b0;
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] += h.data()[i] - h0.data()[i];
    return sim_loss(h, b).value;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST(Cosine, HandCases) {
    const std::vector<double> v{0.3, -2.0, 1.5};
    EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-15);
    EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
    EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 1}), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, ZeroVectorThrows) {
    try {
        cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "zero_norm");
    }
}

TEST(SimLoss, PerfectImitationIsZero) {
    const Matrix h = Matrix::from_rows({{0.5, -0.5, 0.5}, {2.0, 2.0, -2.0}, {-1, 1, 1}});
    Matrix b = h;
    for (double& v : b.data()) v = v < 0 ? -1.0 : 1.0;
    EXPECT_NEAR(sim_loss(h, b).value, 0.0, 1e-12);
}

TEST(SimLoss, OppositeCodesGiveFour) {
    const Matrix h = Matrix::from_rows({{1.0, 2.0}, {2.0, 4.0}});
    const Matrix b = Matrix::from_rows({{1, 1}, {-1, -1}});
    EXPECT_NEAR(sim_loss(h, b).value, 4.0, 1e-10);
}

TEST(SimLoss, MatchesPairwiseLoop) {
    SeededRng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix h = rand_uniform(rng, 8, 12, -1.0, 1.0);
        const Matrix b = CodeMatrix::sign_of(rand_uniform(rng, 8, 12, -1.0, 1.0)).to_matrix();
        EXPECT_NEAR(sim_loss(h, b).value, sim_naive(h, b), 1e-12);
    }
}

TEST(SimLoss, GradientMatchesFiniteDifferences) {
    SeededRng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix h0 = rand_uniform(rng, 8, 16, -1.0, 1.0);
        const Matrix b0 = CodeMatrix::sign_of(h0).to_matrix();
        const Matrix grad = sim_loss(h0, b0).grad_hidden;
        const double step = 1e-5;
        for (std::size_t i = 0; i < h0.size(); ++i) {
            Matrix hp = h0, hm = h0;
            hp.data()[i] += step;
            hm.data()[i] -= step;
            const double fd = (sim_surrogate(hp, h0, b0) - sim_surrogate(hm, h0, b0)) / (2 * step);
            if (std::abs(fd) < 1e-9 && std::abs(grad.data()[i]) < 1e-9) continue;
            EXPECT_LT(rel_err(fd, grad.data()[i]), 1e-5) << "entry " << i;
        }
    }
}

TEST(SimLoss, RowScaleInvariance) {
    SeededRng rng(6);
    Matrix h = rand_uniform(rng, 6, 8, -1.0, 1.0);
    const Matrix b = CodeMatrix::sign_of(h).to_matrix();
    const double before = sim_loss(h, b).value;
    for (double& v : h.row(2)) v *= 3.0;
    EXPECT_NEAR(sim_loss(h, b).value, before, 1e-9);
}

TEST(SimLoss, BatchOfOneThrows) {
    EXPECT_THROW(sim_loss(Matrix(1, 4, 1.0), Matrix(1, 4, 1.0)), Error);
}

TEST(SimLoss, CollapsedRowStaysFinite) {
    Matrix h(3, 4, 0.0);
    h(1, 0) = 1.0;
    h(2, 1) = -1.0;
    const auto loss = sim_loss(h, CodeMatrix::sign_of(h).to_matrix());
    EXPECT_TRUE(std::isfinite(loss.value));
    EXPECT_TRUE(loss.grad_hidden.all_finite());
}

TEST(SimLoss, FeatureTargetGradientFlowsThroughCodesOnly) {
    SeededRng rng(14);
    const Matrix target = rand_uniform(rng, 6, 10, -1.0, 1.0);
    const Matrix h0 = rand_uniform(rng, 6, 5, -1.0, 1.0);
    const Matrix b0 = CodeMatrix::sign_of(h0).to_matrix();
    const Matrix grad = sim_loss_to_target(target, h0, b0).grad_hidden;
    const double step = 1e-5;
    for (std::size_t i = 0; i < h0.size(); ++i) {
        Matrix bp = b0, bm = b0;
        bp.data()[i] += step;
        bm.data()[i] -= step;
        const double fd =
            (sim_loss_to_target(target, h0, bp).value - sim_loss_to_target(target, h0, bm).value) / (2 * step);
        EXPECT_NEAR(fd, grad.data()[i], 1e-7 + 1e-5 * std::abs(fd));
    }
}

TEST(RegLoss, HandCase) {
    const auto loss = reg_loss(Matrix(1, 1, 0.5), Matrix(1, 1, 1.0));
    EXPECT_DOUBLE_EQ(loss.value, 0.25);
    EXPECT_DOUBLE_EQ(loss.grad_hidden(0, 0), -1.0);
}

TEST(RegLoss, ZeroOnCodes) {
    const Matrix b = Matrix::from_rows({{1, -1}, {-1, -1}});
    EXPECT_EQ(reg_loss(b, b).value, 0.0);
}

TEST(RegLoss, GradientMatchesFiniteDifferences) {
    SeededRng rng(10);
    const Matrix h0 = rand_uniform(rng, 8, 16, -1.5, 1.5);
    const Matrix b = CodeMatrix::sign_of(h0).to_matrix();
    const Matrix grad = reg_loss(h0, b).grad_hidden;
    const double step = 1e-5;
    for (std::size_t i = 0; i < h0.size(); ++i) {
        Matrix hp = h0, hm = h0;
        hp.data()[i] += step;
        hm.data()[i] -= step;
        const double fd = (reg_loss(hp, b).value - reg_loss(hm, b).value) / (2 * step);
        EXPECT_LT(rel_err(fd, grad.data()[i]), 1e-6);
    }
}

TEST(RegLoss, ShapeMismatchThrows) {
    EXPECT_THROW(reg_loss(Matrix(2, 3), Matrix(3, 2)), Error);
}

TEST(CombinedLoss, AlphaZeroEqualsSim) {
    SeededRng rng(30);
    const Matrix h = rand_uniform(rng, 5, 6, -1.0, 1.0);
    const CodeMatrix c = CodeMatrix::sign_of(h);
    const auto combined = combined_loss(h, c, 0.0);
    const auto sim = sim_loss(h, c);
    EXPECT_EQ(combined.value, sim.value);
    EXPECT_EQ(combined.grad_hidden, sim.grad_hidden);
}

TEST(CombinedLoss, PaperAlpha) {
    SeededRng rng(31);
    const Matrix h = rand_uniform(rng, 5, 6, -1.0, 1.0);
    const CodeMatrix c = CodeMatrix::sign_of(h);
    const auto combined = combined_loss(h, c, 0.1);
    const double expect = sim_naive(h, c.to_matrix()) + 0.1 * reg_loss(h, c).value;
    EXPECT_NEAR(combined.value, expect, 1e-12);
    const auto sg = sim_loss(h, c).grad_hidden;
    const auto rg = reg_loss(h, c).grad_hidden;
    for (std::size_t i = 0; i < h.size(); ++i)
        EXPECT_NEAR(combined.grad_hidden.data()[i], sg.data()[i] + 0.1 * rg.data()[i], 1e-15);
}

TEST(CombinedLoss, NegativeAlphaThrows) {
    EXPECT_THROW(combined_loss(Matrix(2, 2, 1.0), CodeMatrix(2, 2), -0.1), Error);
}
