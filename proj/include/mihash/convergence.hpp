#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mihash/encoder.hpp"
#include "mihash/error.hpp"
#include "mihash/mutual_info.hpp"
#include "mihash/training.hpp"

namespace mihash {

// ---------------------------------------------------------------------------
// Slack recursion for a single bit pair.
//
// State is (P(B_i,B_j), P(B_i), P(B_j)); the slack is
// eps = P(B_i,B_j) - P(B_i) P(B_j). Each step moves the joint by the
// approximated derivative, P(B_i,B_j) -= eta * g * P(B_j), where g is the MI
// derivative with respect to the joint at fixed marginals (the log odds
// ratio), and moves the marginals by a caller-supplied drift
// (Delta_i, Delta_j). With the default zero drift the marginals stay put,
// matching the marginal-gradient cut used during training.
// ---------------------------------------------------------------------------

struct SlackState {
    double joint = 0.25;       // P(B_i, B_j)
    double marginal_i = 0.5;   // P(B_i)
    double marginal_j = 0.5;   // P(B_j)

    double epsilon() const noexcept { return joint - marginal_i * marginal_j; }

    bool valid(double tol = 1e-12) const noexcept {
        const double lo = std::max(0.0, marginal_i + marginal_j - 1.0);
        const double hi = std::min(marginal_i, marginal_j);
        return marginal_i >= -tol && marginal_i <= 1.0 + tol && marginal_j >= -tol && marginal_j <= 1.0 + tol &&
               joint >= lo - tol && joint <= hi + tol;
    }
};

using Schedule = std::function<double(std::size_t)>;

inline Schedule harmonic_schedule(double eta0) {
    return [eta0](std::size_t t) { return eta0 / (1.0 + static_cast<double>(t)); };
}
inline Schedule power_schedule(double eta0, double exponent) {
    return [eta0, exponent](std::size_t t) { return eta0 / std::pow(1.0 + static_cast<double>(t), exponent); };
}
inline Schedule geometric_schedule(double eta0, double ratio) {
    return [eta0, ratio](std::size_t t) { return eta0 * std::pow(ratio, static_cast<double>(t)); };
}
inline Schedule constant_schedule(double eta) {
    return [eta](std::size_t) { return eta; };
}

struct MarginalDrift {
    double delta_i = 0.0;
    double delta_j = 0.0;
};

/// (step, current state, step size) -> marginal decrements.
using DriftPolicy = std::function<MarginalDrift(std::size_t, const SlackState&, double)>;

struct SlackTrace {
    std::size_t steps = 0;
    std::vector<double> epsilon;        // steps + 1 values, epsilon[0] is the initial slack
    std::vector<double> lr;             // eta^t
    std::vector<double> joint_grad;     // g^t, MI derivative w.r.t. the joint
    std::vector<double> delta_i;        // Delta_i^t
    std::vector<double> delta_j;        // Delta_j^t
    std::vector<std::size_t> clamp_steps;
    SlackState final_state;
};

inline constexpr double kCellFloor = 1e-12;

/// ln(P11 P00 / (P10 P01)) with cells floored at kCellFloor.
inline double joint_log_odds(const SlackState& s) {
    const double p11 = std::max(s.joint, kCellFloor);
    const double p10 = std::max(s.marginal_i - s.joint, kCellFloor);
    const double p01 = std::max(s.marginal_j - s.joint, kCellFloor);
    const double p00 = std::max(1.0 - s.marginal_i - s.marginal_j + s.joint, kCellFloor);
    return std::log(p11) + std::log(p00) - std::log(p10) - std::log(p01);
}

inline SlackTrace simulate_slack(SlackState init, const Schedule& schedule, std::size_t steps,
                                 const DriftPolicy& drift = {}) {
    detail::require(std::isfinite(init.joint) && std::isfinite(init.marginal_i) && std::isfinite(init.marginal_j) &&
                        init.valid(0.0),
                    "invalid_probability", "initial joint/marginals do not form a valid 2x2 distribution");
    SlackTrace trace;
    trace.steps = steps;
    trace.epsilon.reserve(steps + 1);
    trace.epsilon.push_back(init.epsilon());
    SlackState s = init;
    for (std::size_t t = 0; t < steps; ++t) {
        const double eta = schedule(t);
        detail::require(std::isfinite(eta) && eta > 0.0, "invalid_schedule", "step sizes must be positive");
        const double g = joint_log_odds(s);
        const MarginalDrift d = drift ? drift(t, s, eta) : MarginalDrift{};

        SlackState next{s.joint - eta * g * s.marginal_j, s.marginal_i - d.delta_i, s.marginal_j - d.delta_j};
        const SlackState raw = next;
        next.marginal_i = std::clamp(next.marginal_i, 0.0, 1.0);
        next.marginal_j = std::clamp(next.marginal_j, 0.0, 1.0);
        next.joint = std::clamp(next.joint, std::max(0.0, next.marginal_i + next.marginal_j - 1.0),
                                std::min(next.marginal_i, next.marginal_j));
        if (next.joint != raw.joint || next.marginal_i != raw.marginal_i || next.marginal_j != raw.marginal_j)
            trace.clamp_steps.push_back(t);

        trace.lr.push_back(eta);
        trace.joint_grad.push_back(g);
        trace.delta_i.push_back(d.delta_i);
        trace.delta_j.push_back(d.delta_j);
        trace.epsilon.push_back(next.epsilon());
        s = next;
    }
    trace.final_state = s;
    return trace;
}

// ---------------------------------------------------------------------------
// Code scatter under MI-only optimization.
// ---------------------------------------------------------------------------

struct ScatterPoint {
    std::uint64_t x = 0;
    std::uint64_t y = 0;
    friend auto operator<=>(const ScatterPoint&, const ScatterPoint&) = default;
};

struct ScatterFrame {
    std::size_t step = 0;
    std::vector<ScatterPoint> points;
    double mi = 0.0;

    std::size_t distinct_points() const {
        std::vector<ScatterPoint> sorted = points;
        std::sort(sorted.begin(), sorted.end());
        return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    }
};

struct ScatterConfig {
    double lr = 1e-5;
    double beta = 1.0;
    std::size_t steps = 35;
};

/// Bits [0, K/2) form x and bits [K/2, K) form y, bit k contributing 2^(k mod K/2).
inline std::vector<ScatterPoint> scatter_points(const CodeMatrix& codes) {
    detail::require(codes.bits() % 2 == 0, "odd_code_length", "scatter needs an even code length");
    detail::require(codes.bits() <= 128, "invalid_argument", "scatter halves must fit in 64 bits");
    const std::size_t half = codes.bits() / 2;
    std::vector<ScatterPoint> points(codes.rows());
    for (std::size_t r = 0; r < codes.rows(); ++r) {
        auto row = codes.row(r);
        for (std::size_t k = 0; k < half; ++k) {
            if (row[k] > 0) points[r].x |= std::uint64_t{1} << k;
            if (row[half + k] > 0) points[r].y |= std::uint64_t{1} << k;
        }
    }
    return points;
}

/// Shift every bias so the smallest output of each bit over `features` equals
/// `margin` > 0: every sample then maps to the all-ones code.
inline HashModel collapse_model(HashModel model, const Matrix& features, double margin) {
    detail::require(margin > 0.0, "invalid_argument", "collapse margin must be positive");
    const Matrix hidden = project(model, features);
    for (std::size_t k = 0; k < model.code_len(); ++k) {
        double lowest = hidden(0, k);
        for (std::size_t r = 1; r < hidden.rows(); ++r) lowest = std::min(lowest, hidden(r, k));
        model.bias[k] += margin - lowest;
    }
    return model;
}

/// Frame 0 is the starting model; frame t follows t MI-only updates.
inline std::vector<ScatterFrame> scatter_experiment(HashModel model, const Matrix& features,
                                                    const ScatterConfig& config) {
    detail::require(model.code_len() % 2 == 0, "odd_code_length", "scatter needs an even code length");
    std::vector<ScatterFrame> frames;
    frames.reserve(config.steps + 1);
    for (std::size_t step = 0; step <= config.steps; ++step) {
        const ForwardResult fwd = forward(model, features);
        const PairStats stats = estimate_stats(fwd.codes);
        frames.push_back({step, scatter_points(fwd.codes), mi_loss(stats)});
        if (step == config.steps) break;
        Matrix grad_codes = mi_gradient(fwd.codes, stats);
        for (double& g : grad_codes.data()) g *= config.beta;
        plain_sgd_step(model, backward_linear(backward_straight_through(grad_codes), features), config.lr);
    }
    return frames;
}

}  // namespace mihash
