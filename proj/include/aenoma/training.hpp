#pragma once

// End-to-end training with the adaptive weighted binary cross-entropy loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ae_model.hpp"
#include "channel.hpp"
#include "errors.hpp"
#include "nn_core.hpp"
#include "rng.hpp"

namespace aenoma {

inline constexpr double kProbabilityClamp = 1e-12;

/// -sum_j [t_j ln p_j + (1 - t_j) ln(1 - p_j)], probabilities clamped to [1e-12, 1 - 1e-12].
inline double bce(std::span<const std::uint8_t> targets, std::span<const double> probs) {
    require(targets.size() == probs.size(), "bce: target and probability lengths differ");
    double loss = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const double p = std::clamp(probs[j], kProbabilityClamp, 1.0 - kProbabilityClamp);
        loss -= targets[j] ? std::log(p) : std::log1p(-p);
    }
    return loss;
}

/// Batch-mean BCE of per-column targets/probabilities (rows are bits).
inline double mean_bce(const Matrix& targets, const Matrix& probs) {
    require(targets.rows() == probs.rows() && targets.cols() == probs.cols(), "bce: shape mismatch");
    double loss = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c)
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            const double p = std::clamp(probs(r, c), kProbabilityClamp, 1.0 - kProbabilityClamp);
            loss -= targets(r, c) > 0.5 ? std::log(p) : std::log1p(-p);
        }
    return loss / static_cast<double>(probs.cols());
}

struct LossWeights {
    double w1 = 1.0;
    double w2 = 1.0;

    bool operator==(const LossWeights&) const = default;
};

/// (w, 1) when the weak user's loss is at least the strong user's, else (1, w).
inline LossWeights adaptive_weights(double loss1, double loss2, double w) {
    require(w >= 1.0, "loss weight w must be >= 1");
    return loss1 >= loss2 ? LossWeights{w, 1.0} : LossWeights{1.0, w};
}

struct LossBreakdown {
    double loss1 = 0.0;
    double loss2 = 0.0;
    double w1 = 1.0;
    double w2 = 1.0;
    double total = 0.0;

    bool operator==(const LossBreakdown&) const = default;
};

struct TrainingConfig {
    std::size_t batch_size = 1024;
    std::uint64_t iterations = 150000;
    double loss_weight = 10.0;
    double snr1_train_db = 10.0;
    ChannelDistribution channel = ChannelDistribution::fixed(1.0, 2.0);
    std::uint64_t seed = 1;
    AdamHyperparameters adam;
    Normalization normalization = Normalization::batch;
    std::uint64_t history_stride = 1;
    std::uint64_t checkpoint_interval = 0; // 0 disables intermediate checkpoints

    void validate() const {
        require(batch_size >= 2, "batch size must be at least 2");
        require(iterations >= 1, "iterations must be positive");
        require(loss_weight >= 1.0, "loss weight w must be >= 1");
        require(std::isfinite(snr1_train_db), "training SNR must be finite");
        require(history_stride >= 1, "history stride must be positive");
        channel.validate();
        adam.validate();
    }

    bool operator==(const TrainingConfig&) const = default;
};

/// One batch of message indices with the channel draws that go with them.
struct TrainingBatch {
    std::vector<std::size_t> messages;
    double h1 = 1.0;
    std::vector<double> h2;
    std::vector<Complex> noise1;
    std::vector<Complex> noise2;

    std::size_t size() const { return messages.size(); }
};

inline TrainingBatch sample_batch(const Architecture& arch, const ChannelDistribution& channel, double sigma2,
                                  std::size_t batch_size, RngStream& rng) {
    TrainingBatch b;
    b.h1 = channel.h1;
    b.messages.resize(batch_size);
    b.h2.resize(batch_size);
    b.noise1.resize(batch_size);
    b.noise2.resize(batch_size);
    for (std::size_t n = 0; n < batch_size; ++n) {
        b.messages[n] = static_cast<std::size_t>(rng.below(arch.message_count()));
        b.h2[n] = sample_h2(channel, rng);
        b.noise1[n] = rng.complex_gaussian(sigma2);
        b.noise2[n] = rng.complex_gaussian(sigma2);
    }
    return b;
}

struct LossEvaluation {
    LossBreakdown loss;
    Vector gradient; // empty unless requested; layout of AeNomaSystem::parameters()
};

/// Forward pass of the whole system on `batch`, and optionally the gradient of the
/// weighted total. `fixed_weights` bypasses the adaptive rule (used by gradient checks).
inline LossEvaluation evaluate_loss(const AeNomaSystem& sys, const TrainingBatch& batch, double w,
                                    Normalization mode, bool want_gradient,
                                    std::optional<LossWeights> fixed_weights = std::nullopt) {
    const auto& arch = sys.arch;
    const auto n = static_cast<Eigen::Index>(batch.size());
    require(n > 0, "empty training batch");
    const auto k1 = static_cast<Eigen::Index>(arch.k1);
    const auto k2 = static_cast<Eigen::Index>(arch.k2);
    const auto k = k1 + k2;

    Matrix signed_input(k, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto idx = batch.messages[static_cast<std::size_t>(c)];
        for (Eigen::Index j = 0; j < k; ++j) signed_input(j, c) = ((idx >> (k - 1 - j)) & 1u) ? 1.0 : -1.0;
    }
    const Matrix targets = (signed_input.array() + 1.0) * 0.5;
    const Matrix targets1 = targets.topRows(k1);
    const Matrix targets2 = targets.bottomRows(k2);

    const TxPass pass = tx_forward(sys.tx, signed_input, mode);

    std::vector<Complex> eq1(static_cast<std::size_t>(n)), eq2(static_cast<std::size_t>(n));
    std::vector<double> g1(static_cast<std::size_t>(n)), g2(static_cast<std::size_t>(n));
    const Complex h1 = batch.h1;
    for (std::size_t c = 0; c < static_cast<std::size_t>(n); ++c) {
        const Complex x{pass.symbols(0, static_cast<Eigen::Index>(c)), pass.symbols(1, static_cast<Eigen::Index>(c))};
        const Complex h2 = batch.h2[c];
        eq1[c] = equalize(h1 * x + batch.noise1[c], h1);
        eq2[c] = equalize(h2 * x + batch.noise2[c], h2);
        g1[c] = std::abs(h1);
        g2[c] = std::abs(h2);
    }
    const ForwardTape tape1 = sys.rx1.main_block.forward(rx_inputs(eq1, g1, sys.rx1.append_gain));
    const ForwardTape tape2 = sys.rx2.main_block.forward(rx_inputs(eq2, g2, sys.rx2.append_gain));

    LossEvaluation out;
    out.loss.loss1 = mean_bce(targets1, tape1.output);
    out.loss.loss2 = mean_bce(targets2, tape2.output);
    const LossWeights weights = fixed_weights ? *fixed_weights : adaptive_weights(out.loss.loss1, out.loss.loss2, w);
    out.loss.w1 = weights.w1;
    out.loss.w2 = weights.w2;
    out.loss.total = weights.w1 * out.loss.loss1 + weights.w2 * out.loss.loss2;
    if (!want_gradient) return out;

    // d(mean BCE)/d(logit) = (p - t) / N for a sigmoid output.
    const double inv_n = 1.0 / static_cast<double>(n);
    const Matrix seed1 = (weights.w1 * inv_n) * (tape1.output - targets1);
    const Matrix seed2 = (weights.w2 * inv_n) * (tape2.output - targets2);
    const MlpGradients rx1_grads = sys.rx1.main_block.backward(tape1, seed1, GradientSeed::final_preactivation);
    const MlpGradients rx2_grads = sys.rx2.main_block.backward(tape2, seed2, GradientSeed::final_preactivation);

    // The equalized sample is x + n / h, so d(eq)/dx is the identity on (I, Q).
    const Matrix symbol_grad = rx1_grads.input.topRows(2) + rx2_grads.input.topRows(2);
    const TxGradients tx_grads = tx_backward(sys.tx, pass, symbol_grad);

    out.gradient.resize(static_cast<Eigen::Index>(sys.parameter_count()));
    std::size_t off = 0;
    off = Mlp::write_gradients(tx_grads.main, out.gradient, off);
    off = Mlp::write_gradients(tx_grads.sub, out.gradient, off);
    off = Mlp::write_gradients(rx1_grads, out.gradient, off);
    Mlp::write_gradients(rx2_grads, out.gradient, off);
    return out;
}

struct HistoryRow {
    std::uint64_t iteration = 0;
    LossBreakdown loss;
};

struct Checkpoint {
    AeNomaSystem system;
    AdamState adam;
    TrainingConfig config;
    std::uint64_t iteration = 0; // completed steps
    std::vector<HistoryRow> history;
};

inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kBatchStream = 1;

class Trainer {
public:
    Trainer(const Architecture& arch, const TrainingConfig& config) : config_(config), batch_rng_(config.seed, kBatchStream) {
        config_.validate();
        RngStream init_rng(config_.seed, kInitStream);
        system_ = AeNomaSystem::initialize(arch, init_rng);
        system_.tx.normalization = Normalization::codebook;
        adam_ = AdamState(system_.parameter_count(), config_.adam);
        params_ = system_.parameters();
        sigma2_ = snr_to_sigma2(config_.snr1_train_db, config_.channel.h1, arch.power);
    }

    /// One Adam step on a fresh batch. Throws NumericError and leaves the model
    /// untouched when the loss or gradient is not finite.
    LossBreakdown step() {
        const TrainingBatch batch = sample_batch(system_.arch, config_.channel, sigma2_, config_.batch_size, batch_rng_);
        LossEvaluation eval = evaluate_loss(system_, batch, config_.loss_weight, config_.normalization, true);
        if (!std::isfinite(eval.loss.total)) throw NumericError("non-finite training loss", iteration_);
        if (!eval.gradient.allFinite()) throw NumericError("non-finite gradient", iteration_);
        adam_step(params_, eval.gradient, adam_);
        system_.set_parameters(params_);
        if (iteration_ % config_.history_stride == 0) history_.push_back({iteration_, eval.loss});
        ++iteration_;
        return eval.loss;
    }

    const AeNomaSystem& system() const { return system_; }
    const TrainingConfig& config() const { return config_; }
    std::uint64_t iteration() const { return iteration_; }
    double training_sigma2() const { return sigma2_; }

    Checkpoint checkpoint() const { return {system_, adam_, config_, iteration_, history_}; }

private:
    TrainingConfig config_;
    RngStream batch_rng_;
    AeNomaSystem system_;
    AdamState adam_;
    Vector params_;
    double sigma2_ = 1.0;
    std::uint64_t iteration_ = 0;
    std::vector<HistoryRow> history_;
};

/// Runs config.iterations steps. `on_checkpoint` fires every checkpoint_interval steps.
inline Checkpoint train(const Architecture& arch, const TrainingConfig& config,
                        const std::function<void(const Checkpoint&)>& on_checkpoint = {}) {
    Trainer trainer(arch, config);
    for (std::uint64_t i = 0; i < config.iterations; ++i) {
        trainer.step();
        if (on_checkpoint && config.checkpoint_interval > 0 && trainer.iteration() % config.checkpoint_interval == 0 &&
            trainer.iteration() < config.iterations)
            on_checkpoint(trainer.checkpoint());
    }
    return trainer.checkpoint();
}

struct SelfCheckReport {
    GradCheckResult result;
    std::size_t parameter_count = 0;
    LossBreakdown loss;
};

/// Finite-difference check of the full Tx/Rx1/Rx2 gradient on a small batch of a
/// freshly initialized system. `gradient_tamper` lets callers corrupt the analytic
/// gradient to confirm the check trips.
inline SelfCheckReport gradient_self_check(std::uint64_t seed, std::size_t batch_size = 4, double eps = 3e-5,
                                           const std::function<void(Vector&)>& gradient_tamper = {}) {
    const Architecture arch;
    RngStream init_rng(seed, kInitStream);
    AeNomaSystem sys = AeNomaSystem::initialize(arch, init_rng);
    RngStream batch_rng(seed, kBatchStream);
    const auto channel = ChannelDistribution::uniform(1.0, 1.0, 3.0);
    const TrainingBatch batch = sample_batch(arch, channel, snr_to_sigma2(10.0, 1.0, arch.power), batch_size, batch_rng);
    const double w = 10.0;

    const LossEvaluation base = evaluate_loss(sys, batch, w, Normalization::batch, true);
    const LossWeights weights{base.loss.w1, base.loss.w2};
    Vector analytic = base.gradient;
    if (gradient_tamper) gradient_tamper(analytic);

    AeNomaSystem probe = sys;
    const auto loss = [&](const Vector& p) {
        probe.set_parameters(p);
        return evaluate_loss(probe, batch, w, Normalization::batch, false, weights).loss.total;
    };
    return {grad_check(sys.parameters(), loss, analytic, eps), sys.parameter_count(), base.loss};
}

/// Published experiment settings plus the gain used when testing.
struct ExperimentPreset {
    std::string name;
    TrainingConfig training;
    double eval_h2 = 2.0;
};

inline ExperimentPreset experiment_preset(const std::string& name) {
    ExperimentPreset p;
    p.name = name;
    p.training.iterations = 150000;
    p.training.snr1_train_db = 10.0;
    if (name == "case1") {
        p.training.channel = ChannelDistribution::fixed(1.0, 2.0);
        p.training.loss_weight = 10.0;
        p.eval_h2 = 2.0;
    } else if (name == "case2") {
        p.training.channel = ChannelDistribution::uniform(1.0, 1.0, 3.0);
        p.training.loss_weight = 20.0;
        p.eval_h2 = 2.0;
    } else if (name == "case3") {
        p.training.channel = ChannelDistribution::uniform(1.0, 8.0, 12.0);
        p.training.loss_weight = 15.0;
        p.eval_h2 = 10.0;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected case1, case2 or case3)");
    }
    return p;
}

} // namespace aenoma
