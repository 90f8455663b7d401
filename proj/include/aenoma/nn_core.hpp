#pragma once

// Minimal dense-network substrate: fully connected layers with ELU / sigmoid /
// linear activations and optional identity skips, batched over sample columns,
// with exact reverse-mode gradients, Adam and a finite-difference checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "rng.hpp"

namespace aenoma {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { elu, sigmoid, linear };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::elu: return "elu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
    }
    return "?";
}

inline Activation activation_from_string(std::string_view name) {
    if (name == "elu") return Activation::elu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "linear") return Activation::linear;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double apply_activation(Activation a, double z) {
    switch (a) {
    case Activation::elu: return elu(z);
    case Activation::sigmoid: return sigmoid(z);
    case Activation::linear: return z;
    }
    return z;
}

/// Derivative of the activation given the pre-activation z and its output a = act(z).
inline double activation_slope(Activation act, double z, double a) {
    switch (act) {
    case Activation::elu: return z >= 0.0 ? 1.0 : a + 1.0;
    case Activation::sigmoid: return a * (1.0 - a);
    case Activation::linear: return 1.0;
    }
    return 1.0;
}

struct MlpSpec {
    /// Widths including the input: layer i maps layer_dims[i] -> layer_dims[i + 1].
    std::vector<std::size_t> layer_dims;
    std::vector<Activation> activations;
    std::vector<bool> residual_flags;

    std::size_t num_layers() const { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    void validate() const {
        require(layer_dims.size() >= 2, "MlpSpec needs at least one layer");
        for (auto d : layer_dims) require(d > 0, "MlpSpec layer widths must be positive");
        require(activations.size() == num_layers(), "MlpSpec needs one activation per layer");
        require(residual_flags.size() == num_layers(), "MlpSpec needs one residual flag per layer");
        for (std::size_t i = 0; i < num_layers(); ++i) {
            require(!residual_flags[i] || layer_dims[i] == layer_dims[i + 1],
                    "residual skip on layer " + std::to_string(i) + " requires in_dim == out_dim");
        }
    }

    bool operator==(const MlpSpec&) const = default;
};

/// Input layer, `hidden_layers` hidden layers of `width` with skips across every
/// width->width layer, and an output layer with the given activation.
inline MlpSpec residual_stack(std::size_t input_dim, std::size_t width, std::size_t hidden_layers,
                              std::size_t output_dim, Activation output_activation,
                              bool skips = true) {
    require(hidden_layers >= 1, "residual_stack needs at least one hidden layer");
    MlpSpec spec;
    spec.layer_dims.push_back(input_dim);
    for (std::size_t i = 0; i < hidden_layers; ++i) {
        spec.layer_dims.push_back(width);
        spec.activations.push_back(Activation::elu);
        spec.residual_flags.push_back(skips && i > 0);
    }
    spec.layer_dims.push_back(output_dim);
    spec.activations.push_back(output_activation);
    spec.residual_flags.push_back(false);
    return spec;
}

struct DenseLayer {
    Matrix weights; // out_dim x in_dim
    Vector bias;    // out_dim
    Activation activation = Activation::linear;

    std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Everything the backward pass needs, for one batch (columns are samples).
struct ForwardTape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> preactivations;
    std::vector<Matrix> activated; // act(z), before the residual add
    Matrix output;

    std::size_t size() const { return inputs.size(); }
};

struct MlpGradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Matrix input;
};

/// Where the upstream gradient handed to Mlp::backward is taken.
enum class GradientSeed {
    output,               // d loss / d final output
    final_preactivation,  // d loss / d pre-activation of the last layer (fused sigmoid + BCE)
};

class Mlp {
public:
    Mlp() = default;

    Mlp(MlpSpec spec, std::vector<DenseLayer> layers) : spec_(std::move(spec)), layers_(std::move(layers)) {
        spec_.validate();
        require(layers_.size() == spec_.num_layers(), "layer count does not match MlpSpec");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            require(l.in_dim() == spec_.layer_dims[i] && l.out_dim() == spec_.layer_dims[i + 1],
                    "layer " + std::to_string(i) + " shape does not match MlpSpec");
            require(static_cast<std::size_t>(l.bias.size()) == l.out_dim(),
                    "layer " + std::to_string(i) + " bias length differs from weight rows");
            require(l.activation == spec_.activations[i],
                    "layer " + std::to_string(i) + " activation differs from MlpSpec");
            require(l.weights.allFinite() && l.bias.allFinite(),
                    "layer " + std::to_string(i) + " has non-finite parameters");
        }
    }

    /// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero biases.
    static Mlp glorot(const MlpSpec& spec, RngStream& rng) {
        spec.validate();
        std::vector<DenseLayer> layers;
        for (std::size_t i = 0; i < spec.num_layers(); ++i) {
            const auto in = spec.layer_dims[i];
            const auto out = spec.layer_dims[i + 1];
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            DenseLayer layer{Matrix(out, in), Vector::Zero(out), spec.activations[i]};
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
                    layer.weights(r, c) = rng.uniform(-limit, limit);
            layers.push_back(std::move(layer));
        }
        return Mlp(spec, std::move(layers));
    }

    const MlpSpec& spec() const { return spec_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    ForwardTape forward(const Matrix& input) const {
        check_input(input);
        ForwardTape tape;
        tape.inputs.reserve(layers_.size());
        tape.preactivations.reserve(layers_.size());
        tape.activated.reserve(layers_.size());
        Matrix current = input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& layer = layers_[i];
            Matrix z = layer.weights * current;
            z.colwise() += layer.bias;
            Matrix a = z.unaryExpr([act = layer.activation](double v) { return apply_activation(act, v); });
            Matrix out = spec_.residual_flags[i] ? Matrix(a + current) : a;
            tape.inputs.push_back(std::move(current));
            tape.preactivations.push_back(std::move(z));
            tape.activated.push_back(std::move(a));
            current = std::move(out);
        }
        tape.output = std::move(current);
        return tape;
    }

    /// Forward pass without recording a tape.
    Matrix predict(const Matrix& input) const {
        check_input(input);
        Matrix current = input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& layer = layers_[i];
            Matrix z = layer.weights * current;
            z.colwise() += layer.bias;
            z = z.unaryExpr([act = layer.activation](double v) { return apply_activation(act, v); });
            if (spec_.residual_flags[i]) z += current;
            current = std::move(z);
        }
        return current;
    }

    MlpGradients backward(const ForwardTape& tape, const Matrix& upstream,
                          GradientSeed seed = GradientSeed::output) const {
        if (tape.size() != layers_.size())
            throw std::logic_error("forward tape does not belong to this network");
        if (static_cast<std::size_t>(upstream.rows()) != spec_.output_dim() ||
            upstream.cols() != tape.output.cols())
            throw ConfigError("upstream gradient shape does not match network output");
        if (seed == GradientSeed::final_preactivation && spec_.residual_flags.back())
            throw ConfigError("pre-activation seeding is undefined for a residual output layer");

        MlpGradients grads;
        grads.weights.resize(layers_.size());
        grads.biases.resize(layers_.size());
        Matrix delta = upstream; // d loss / d (output of layer i)
        for (std::size_t k = layers_.size(); k-- > 0;) {
            const auto& layer = layers_[k];
            Matrix dz;
            if (k + 1 == layers_.size() && seed == GradientSeed::final_preactivation) {
                dz = delta;
            } else {
                dz = delta;
                const auto& z = tape.preactivations[k];
                const auto& a = tape.activated[k];
                for (Eigen::Index c = 0; c < dz.cols(); ++c)
                    for (Eigen::Index r = 0; r < dz.rows(); ++r)
                        dz(r, c) *= activation_slope(layer.activation, z(r, c), a(r, c));
            }
            grads.weights[k] = dz * tape.inputs[k].transpose();
            grads.biases[k] = dz.rowwise().sum();
            Matrix below = layer.weights.transpose() * dz;
            if (spec_.residual_flags[k]) below += delta;
            delta = std::move(below);
        }
        grads.input = std::move(delta);
        return grads;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    /// Flatten parameters (per layer: weights column-major, then bias) into out[offset..].
    std::size_t write_parameters(Vector& out, std::size_t offset) const {
        for (const auto& l : layers_) {
            out.segment(offset, l.weights.size()) = l.weights.reshaped();
            offset += static_cast<std::size_t>(l.weights.size());
            out.segment(offset, l.bias.size()) = l.bias;
            offset += static_cast<std::size_t>(l.bias.size());
        }
        return offset;
    }

    std::size_t read_parameters(const Vector& in, std::size_t offset) {
        for (auto& l : layers_) {
            l.weights.reshaped() = in.segment(offset, l.weights.size());
            offset += static_cast<std::size_t>(l.weights.size());
            l.bias = in.segment(offset, l.bias.size());
            offset += static_cast<std::size_t>(l.bias.size());
        }
        return offset;
    }

    /// Same layout as write_parameters.
    static std::size_t write_gradients(const MlpGradients& g, Vector& out, std::size_t offset) {
        for (std::size_t i = 0; i < g.weights.size(); ++i) {
            out.segment(offset, g.weights[i].size()) = g.weights[i].reshaped();
            offset += static_cast<std::size_t>(g.weights[i].size());
            out.segment(offset, g.biases[i].size()) = g.biases[i];
            offset += static_cast<std::size_t>(g.biases[i].size());
        }
        return offset;
    }

private:
    void check_input(const Matrix& input) const {
        if (static_cast<std::size_t>(input.rows()) != spec_.input_dim())
            throw ConfigError("network expects input dimension " + std::to_string(spec_.input_dim()) +
                              ", got " + std::to_string(input.rows()));
    }

    MlpSpec spec_;
    std::vector<DenseLayer> layers_;
};

struct AdamHyperparameters {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        require(lr >= 0.0 && std::isfinite(lr), "Adam lr must be finite and non-negative");
        require(beta1 >= 0.0 && beta1 < 1.0, "Adam beta1 must lie in [0, 1)");
        require(beta2 >= 0.0 && beta2 < 1.0, "Adam beta2 must lie in [0, 1)");
        require(epsilon > 0.0, "Adam epsilon must be positive");
    }

    bool operator==(const AdamHyperparameters&) const = default;
};

struct AdamState {
    Vector first_moment;
    Vector second_moment;
    std::uint64_t step = 0;
    AdamHyperparameters hyper;

    AdamState() = default;
    AdamState(std::size_t parameter_count, AdamHyperparameters h)
        : first_moment(Vector::Zero(static_cast<Eigen::Index>(parameter_count))),
          second_moment(Vector::Zero(static_cast<Eigen::Index>(parameter_count))), hyper(h) {
        hyper.validate();
    }
};

/// One bias-corrected Adam update; increments state.step.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size())
        throw ConfigError("Adam: parameter, gradient and moment shapes differ");
    if (!grads.allFinite()) throw NumericError("Adam: non-finite gradient", state.step);

    const auto& h = state.hyper;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(h.beta1, t);
    const double correction2 = 1.0 - std::pow(h.beta2, t);
    state.first_moment = h.beta1 * state.first_moment + (1.0 - h.beta1) * grads;
    state.second_moment = h.beta2 * state.second_moment + (1.0 - h.beta2) * grads.cwiseAbs2();
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double m_hat = state.first_moment[i] / correction1;
        const double v_hat = state.second_moment[i] / correction2;
        params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares an analytic gradient against central differences of `loss` at `params`.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, absolute_floor).
inline GradCheckResult grad_check(const Vector& params, const std::function<double(const Vector&)>& loss,
                                  const Vector& analytic, double eps, double absolute_floor = 1e-6) {
    require(eps > 0.0, "grad_check: eps must be positive");
    require(params.size() == analytic.size(), "grad_check: gradient length differs from parameters");
    GradCheckResult result;
    Vector probe = params;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + eps;
        const double up = loss(probe);
        probe[i] = params[i] - eps;
        const double down = loss(probe);
        probe[i] = params[i];
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), absolute_floor});
        const double err = std::abs(analytic[i] - numeric) / denom;
        if (err > result.max_relative_error || i == 0) {
            result = {err, static_cast<std::size_t>(i), analytic[i], numeric};
        }
    }
    return result;
}

} // namespace aenoma
