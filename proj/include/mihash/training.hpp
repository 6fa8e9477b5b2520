#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mihash/encoder.hpp"
#include "mihash/error.hpp"
#include "mihash/mutual_info.hpp"
#include "mihash/objectives.hpp"
#include "mihash/tensor.hpp"

namespace mihash {

/// Default MI weight per code length: 1e-4 up to 16 bits, 1e-3 up to 32, 1e-2 beyond.
inline double default_beta(std::size_t code_len) noexcept {
    if (code_len <= 16) return 1e-4;
    if (code_len <= 32) return 1e-3;
    return 1e-2;
}

/// What L_sim asks the codes to imitate: the angles between continuous
/// hash-layer outputs, or the angles between the input features.
enum class SimilaritySource { hidden, features };

struct TrainConfig {
    std::size_t code_len = 16;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double alpha = 0.1;
    double beta = 1e-4;
    std::size_t epochs = 300;
    std::size_t lr_decay_every = 100;
    double lr_decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    std::size_t shuffle_iters = 1;
    SimilaritySource similarity = SimilaritySource::hidden;

    void validate() const {
        auto check = [](bool ok, const char* key, const std::string& why) {
            detail::require(ok, "invalid_config", std::string(key) + ": " + why);
        };
        check(code_len >= 2, "code_len", "must be at least 2");
        check(batch_size >= 2, "batch_size", "must be at least 2");
        check(std::isfinite(lr) && lr > 0.0, "lr", "must be positive");
        check(std::isfinite(alpha) && alpha >= 0.0, "alpha", "must be non-negative");
        check(std::isfinite(beta) && beta >= 0.0, "beta", "must be non-negative");
        check(lr_decay_every >= 1, "lr_decay_every", "must be at least 1");
        check(std::isfinite(lr_decay_factor) && lr_decay_factor > 0.0, "lr_decay_factor", "must be positive");
        check(std::isfinite(momentum) && momentum >= 0.0 && momentum < 1.0, "momentum", "must be in [0, 1)");
        check(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay", "must be non-negative");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct OptimizerState {
    Matrix weight_velocity;
    std::vector<double> bias_velocity;
    double momentum = 0.9;
    double weight_decay = 5e-4;

    static OptimizerState for_model(const HashModel& model, double momentum, double weight_decay) {
        return {Matrix(model.weights.rows(), model.weights.cols()), std::vector<double>(model.bias.size(), 0.0),
                momentum, weight_decay};
    }
};

namespace detail {

inline void check_grad_shapes(const HashModel& model, const LinearGrads& grads) {
    require(model.weights.same_shape(grads.weights) && model.bias.size() == grads.bias.size(),
            "dimension_mismatch", "gradient shapes do not match the model");
}

}  // namespace detail

/// v = momentum * v + (g + weight_decay * p); p -= lr * v
inline void sgd_step(HashModel& model, const LinearGrads& grads, OptimizerState& state, double lr) {
    detail::check_grad_shapes(model, grads);
    detail::require(state.weight_velocity.same_shape(model.weights) &&
                        state.bias_velocity.size() == model.bias.size(),
                    "dimension_mismatch", "optimizer state does not match the model");
    auto p = model.weights.data();
    auto g = grads.weights.data();
    auto v = state.weight_velocity.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = state.momentum * v[i] + (g[i] + state.weight_decay * p[i]);
        p[i] -= lr * v[i];
    }
    for (std::size_t i = 0; i < model.bias.size(); ++i) {
        double& vb = state.bias_velocity[i];
        vb = state.momentum * vb + (grads.bias[i] + state.weight_decay * model.bias[i]);
        model.bias[i] -= lr * vb;
    }
}

/// No momentum, no weight decay.
inline void plain_sgd_step(HashModel& model, const LinearGrads& grads, double lr) {
    detail::check_grad_shapes(model, grads);
    auto p = model.weights.data();
    auto g = grads.weights.data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    for (std::size_t i = 0; i < model.bias.size(); ++i) model.bias[i] -= lr * grads.bias[i];
}

/// Step decay: lr * factor^floor(epoch / every).
inline double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
    const auto decays = static_cast<double>(epoch / config.lr_decay_every);
    return config.lr * std::pow(config.lr_decay_factor, decays);
}

struct ShuffleResult {
    double mi_before = 0.0;
    double mi_after = 0.0;
};

/// Gradient of beta * L_m with respect to the model, computed over the full
/// feature set (MI gradient on the codes, straight-through, linear backward).
inline LinearGrads mi_model_gradient(const HashModel& model, const Matrix& features, double beta,
                                     double* mi_value = nullptr) {
    const ForwardResult fwd = forward(model, features);
    const PairStats stats = estimate_stats(fwd.codes);
    if (mi_value != nullptr) *mi_value = mi_loss(stats);
    Matrix grad_codes = mi_gradient(fwd.codes, stats);
    for (double& g : grad_codes.data()) g *= beta;
    return backward_linear(backward_straight_through(grad_codes), features);
}

/// One MI-minimization update at an explicit learning rate, plain SGD.
inline ShuffleResult shuffle_step_at(HashModel& model, const Matrix& features, double beta, double lr) {
    ShuffleResult result;
    if (beta == 0.0) {
        result.mi_before = mi_loss(estimate_stats(forward(model, features).codes));
        result.mi_after = result.mi_before;
        return result;
    }
    const LinearGrads grads = mi_model_gradient(model, features, beta, &result.mi_before);
    plain_sgd_step(model, grads, lr);
    result.mi_after = mi_loss(estimate_stats(forward(model, features).codes));
    return result;
}

inline ShuffleResult shuffle_step(HashModel& model, const Matrix& features, const TrainConfig& config,
                                  std::size_t epoch) {
    return shuffle_step_at(model, features, config.beta, lr_at_epoch(config, epoch));
}

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double mi = 0.0;   // L_m at the start of the epoch, before shuffling
    double sim = 0.0;  // mean over minibatches
    double reg = 0.0;  // mean over minibatches
    std::size_t distinct_codes = 0;

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
    HashModel model;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const HashModel&)>;

/// Seed of the minibatch-order stream, derived from the config seed so the
/// network and the data loader share one user-facing seed.
inline std::uint64_t loader_seed(std::uint64_t seed) noexcept { return seed ^ 0x6c6f61646572ULL; }

/// Minibatch index lists for one epoch. A trailing batch smaller than 2 is dropped.
inline std::vector<std::vector<std::size_t>> make_minibatches(std::size_t n, std::size_t batch_size,
                                                              SeededRng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        if (end - start < 2) break;
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

/// Shuffle and learn: each epoch runs the full-dataset MI update(s), then
/// momentum SGD on L_sim + alpha * L_reg over shuffled minibatches.
inline TrainResult train(HashModel model, const Matrix& features, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
    config.validate();
    model.validate();
    detail::require(features.rows() >= 2, "empty_dataset", "training needs at least 2 samples");
    detail::require(features.cols() == model.feature_dim(), "dimension_mismatch",
                    "feature dimension does not match the model");

    SeededRng loader(loader_seed(config.seed));
    OptimizerState state = OptimizerState::for_model(model, config.momentum, config.weight_decay);
    std::vector<EpochLog> log;
    log.reserve(config.epochs);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        EpochLog entry{epoch, lr};
        for (std::size_t it = 0; it < config.shuffle_iters; ++it) {
            const ShuffleResult s = shuffle_step_at(model, features, config.beta, lr);
            if (it == 0) entry.mi = s.mi_before;
        }

        const auto batches = make_minibatches(features.rows(), config.batch_size, loader);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Matrix x = select_rows(features, batches[b]);
            const ForwardResult fwd = forward(model, x);
            const bool to_features = config.similarity == SimilaritySource::features;
            const CombinedLoss loss = combined_loss(fwd.hidden, fwd.codes, config.alpha, to_features ? &x : nullptr);
            if (!std::isfinite(loss.value) || !loss.grad_hidden.all_finite())
                detail::fail("non_finite", "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                               std::to_string(b) + " (L_sim=" + std::to_string(loss.sim) +
                                               ", L_reg=" + std::to_string(loss.reg) + ")");
            entry.sim += loss.sim;
            entry.reg += loss.reg;
            sgd_step(model, backward_linear(loss.grad_hidden, x), state, lr);
        }
        if (!batches.empty()) {
            entry.sim /= static_cast<double>(batches.size());
            entry.reg /= static_cast<double>(batches.size());
        }
        entry.distinct_codes = count_distinct_codes(forward(model, features).codes);
        log.push_back(entry);
        if (on_epoch) on_epoch(entry, model);
    }
    return {std::move(model), std::move(log)};
}

}  // namespace mihash
