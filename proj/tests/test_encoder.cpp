#include <gtest/gtest.h>

#include "mihash/encoder.hpp"
#include "mihash/objectives.hpp"

using namespace mihash;

TEST(Forward, SignOfZeroIsPlusOne) {
    HashModel m{Matrix(1, 1, 0.0), {0.0}};
    const auto fwd = forward(m, Matrix(1, 1, 3.0));
    EXPECT_EQ(fwd.hidden(0, 0), 0.0);
    EXPECT_EQ(fwd.codes(0, 0), 1);
}

TEST(Forward, OneByOne) {
    HashModel m{Matrix(1, 1, 2.0), {-5.0}};
    const auto fwd = forward(m, Matrix(1, 1, 2.0));
    EXPECT_DOUBLE_EQ(fwd.hidden(0, 0), -1.0);
    EXPECT_EQ(fwd.codes(0, 0), -1);
}

TEST(Forward, MatchesRecomputation) {
    SeededRng rng(2);
    HashModel m = init_model(6, 5, rng);
    for (double& b : m.bias) b = rng.uniform(-0.2, 0.2);
    const Matrix x = rand_uniform(rng, 8, 6, -1.0, 1.0);
    const auto fwd = forward(m, x);
    for (std::size_t n = 0; n < 8; ++n)
        for (std::size_t k = 0; k < 5; ++k) {
            double h = m.bias[k];
            for (std::size_t d = 0; d < 6; ++d) h += x(n, d) * m.weights(d, k);
            EXPECT_NEAR(fwd.hidden(n, k), h, 1e-12);
            EXPECT_EQ(fwd.codes(n, k), h < 0.0 ? -1 : 1);
        }
}

TEST(Init, FanInBoundsAndZeroBias) {
    SeededRng rng(0);
    const HashModel m = init_model(16, 8, rng);
    for (double w : m.weights.data()) {
        EXPECT_GE(w, -0.25);
        EXPECT_LT(w, 0.25);
    }
    for (double b : m.bias) EXPECT_EQ(b, 0.0);
}

TEST(Backward, StraightThroughIsIdentity) {
    SeededRng rng(1);
    const Matrix g = rand_uniform(rng, 4, 3, -1.0, 1.0);
    EXPECT_EQ(backward_straight_through(g), g);
}

TEST(Backward, LinearMatchesFiniteDifferences) {
    // L = sum(G .* H) for a fixed G, so dL/dW and dL/db are exactly backward_linear(G, X).
    SeededRng rng(7);
    HashModel m = init_model(5, 4, rng);
    const Matrix x = rand_uniform(rng, 6, 5, -1.0, 1.0);
    const Matrix g = rand_uniform(rng, 6, 4, -1.0, 1.0);
    auto loss = [&](const HashModel& model) {
        const Matrix h = project(model, x);
        double s = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) s += h.data()[i] * g.data()[i];
        return s;
    };
    const LinearGrads grads = backward_linear(g, x);
    const double step = 1e-6;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        HashModel plus = m, minus = m;
        plus.weights.data()[i] += step;
        minus.weights.data()[i] -= step;
        const double fd = (loss(plus) - loss(minus)) / (2 * step);
        EXPECT_NEAR(fd, grads.weights.data()[i], 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (std::size_t k = 0; k < m.bias.size(); ++k) {
        HashModel plus = m, minus = m;
        plus.bias[k] += step;
        minus.bias[k] -= step;
        const double fd = (loss(plus) - loss(minus)) / (2 * step);
        EXPECT_NEAR(fd, grads.bias[k], 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Backward, RegLossThroughLinearLayer) {
    // B held at the codes of the unperturbed model.
    SeededRng rng(12);
    HashModel m = init_model(4, 3, rng);
    const Matrix x = rand_uniform(rng, 5, 4, -1.0, 1.0);
    const Matrix b = forward(m, x).codes.to_matrix();
    const LinearGrads grads = backward_linear(reg_loss(project(m, x), b).grad_hidden, x);
    const double step = 1e-6;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        HashModel plus = m, minus = m;
        plus.weights.data()[i] += step;
        minus.weights.data()[i] -= step;
        const double fd = (reg_loss(project(plus, x), b).value - reg_loss(project(minus, x), b).value) / (2 * step);
        EXPECT_NEAR(fd, grads.weights.data()[i], 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Pack, AllOnesAndAllMinusOnes) {
    const PackedCodes ones = pack(CodeMatrix(1, 8, 1));
    EXPECT_EQ(ones.row(0)[0], 0xFFULL);
    const PackedCodes zeros = pack(CodeMatrix(1, 8, -1));
    EXPECT_EQ(zeros.row(0)[0], 0x00ULL);
}

TEST(Pack, BitOrder) {
    CodeMatrix c(1, 70, -1);
    c.set(0, 0, 1);
    c.set(0, 65, 1);
    const PackedCodes p = pack(c);
    ASSERT_EQ(p.words_per_row(), 2u);
    EXPECT_EQ(p.row(0)[0], 1ULL);
    EXPECT_EQ(p.row(0)[1], 2ULL);
}

TEST(Pack, RoundTripAndPaddingClear) {
    SeededRng rng(33);
    for (std::size_t bits : {1u, 16u, 63u, 64u, 65u, 130u}) {
        CodeMatrix c(1000, bits);
        for (std::size_t r = 0; r < 1000; ++r)
            for (std::size_t k = 0; k < bits; ++k) c.set(r, k, rng.below(2) ? 1 : -1);
        const PackedCodes p = pack(c);
        EXPECT_TRUE(p.padding_clear());
        EXPECT_EQ(unpack(p), c);
    }
}

TEST(Pack, DistinctCodes) {
    CodeMatrix c(4, 3, 1);
    c.set(1, 2, -1);
    c.set(3, 2, -1);
    EXPECT_EQ(count_distinct_codes(c), 2u);
}
