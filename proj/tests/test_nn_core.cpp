#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "aenoma/nn_core.hpp"

using namespace aenoma;

namespace {

Mlp random_net(const MlpSpec& spec, std::uint64_t seed) {
    RngStream rng(seed, 0);
    Mlp net = Mlp::glorot(spec, rng);
    // Non-zero biases so every code path is exercised.
    for (auto& l : net.layers())
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.5, 0.5);
    return net;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.gaussian();
    return m;
}

// Scalar test loss: sum(R .* output) for a fixed random R.
double probe_loss(const Mlp& net, const Matrix& input, const Matrix& r) {
    return (net.predict(input).array() * r.array()).sum();
}

// Plain central differences over every weight and bias, independent of grad_check().
double max_fd_error(Mlp net, const Matrix& input, const Matrix& r, double step) {
    const auto tape = net.forward(input);
    const auto grads = net.backward(tape, r);
    double worst = 0.0;
    const auto compare = [&](double analytic, double& slot) {
        const double saved = slot;
        slot = saved + step;
        const double up = probe_loss(net, input, r);
        slot = saved - step;
        const double down = probe_loss(net, input, r);
        slot = saved;
        const double numeric = (up - down) / (2 * step);
        worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    };
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
        auto& layer = net.layers()[k];
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) compare(grads.weights[k].data()[i], layer.weights.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) compare(grads.biases[k][i], layer.bias[i]);
    }
    Matrix x = input;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + step;
        const double up = probe_loss(net, x, r);
        x.data()[i] = saved - step;
        const double down = probe_loss(net, x, r);
        x.data()[i] = saved;
        const double numeric = (up - down) / (2 * step);
        const double analytic = grads.input.data()[i];
        worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    }
    return worst;
}

} // namespace

TEST(Activations, EluValues) {
    EXPECT_EQ(elu(0.0), 0.0);
    EXPECT_EQ(elu(1.0), 1.0);
    // exp(-30) = 9.357622968840175e-14
    EXPECT_NEAR(elu(-30.0), -1.0 + 9.357622968840175e-14, 1e-16);
    EXPECT_GT(elu(-30.0), -1.0);
}

TEST(Activations, EluSlopeIsContinuousAtZero) {
    EXPECT_DOUBLE_EQ(activation_slope(Activation::elu, 0.0, elu(0.0)), 1.0);
    const double z = -1e-9;
    EXPECT_NEAR(activation_slope(Activation::elu, z, elu(z)), 1.0, 1e-8);
}

TEST(Activations, SigmoidValues) {
    EXPECT_EQ(sigmoid(0.0), 0.5);
    EXPECT_EQ(sigmoid(800.0), 1.0);
    EXPECT_EQ(sigmoid(-800.0), 0.0);
    for (double x : {-7.5, -1.0, 0.3, 2.0, 15.0}) {
        EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
        EXPECT_LT(sigmoid(x), sigmoid(x + 0.1));
    }
    EXPECT_DOUBLE_EQ(activation_slope(Activation::sigmoid, 0.0, sigmoid(0.0)), 0.25);
}

TEST(MlpSpec, RejectsResidualAcrossWidthChange) {
    MlpSpec spec{{3, 4}, {Activation::elu}, {true}};
    EXPECT_THROW(spec.validate(), ConfigError);
    MlpSpec missing{{3, 4, 4}, {Activation::elu}, {false, false}};
    EXPECT_THROW(missing.validate(), ConfigError);
}

TEST(MlpSpec, ResidualStackPlacesSkipsOnSquareHiddenLayers) {
    const auto spec = residual_stack(4, 32, 5, 2, Activation::linear);
    ASSERT_EQ(spec.num_layers(), 6u);
    EXPECT_EQ(spec.residual_flags, (std::vector<bool>{false, true, true, true, true, false}));
    EXPECT_EQ(spec.layer_dims, (std::vector<std::size_t>{4, 32, 32, 32, 32, 32, 2}));
    spec.validate();
}

TEST(MlpForward, IdentityLinearLayer) {
    Mlp net({{3, 3}, {Activation::linear}, {false}}, {DenseLayer{Matrix::Identity(3, 3), Vector::Zero(3), Activation::linear}});
    const Vector v = Vector::LinSpaced(3, -1.0, 2.0);
    EXPECT_EQ(net.predict(v), Matrix(v));
}

TEST(MlpForward, SkipPathAlone) {
    Mlp net({{3, 3}, {Activation::linear}, {true}}, {DenseLayer{Matrix::Zero(3, 3), Vector::Zero(3), Activation::linear}});
    const Vector v(Vector::LinSpaced(3, 0.5, -4.0));
    EXPECT_EQ(net.predict(v), Matrix(v));
}

TEST(MlpForward, TwoLayerHandComputation) {
    Matrix w1(2, 2);
    w1 << 1.0, -1.0, 0.5, 2.0;
    Vector b1(2);
    b1 << 0.1, -0.2;
    Matrix w2(1, 2);
    w2 << 1.0, 1.0;
    Vector b2(1);
    b2 << 0.5;
    Mlp net({{2, 2, 1}, {Activation::elu, Activation::linear}, {false, false}},
            {DenseLayer{w1, b1, Activation::elu}, DenseLayer{w2, b2, Activation::linear}});
    Vector x(2);
    x << 1.0, 2.0;
    // z1 = (-0.9, 4.3); elu(-0.9) = exp(-0.9) - 1 = -0.5934303402594009; out = -0.59343... + 4.3 + 0.5
    EXPECT_NEAR(net.predict(x)(0, 0), 4.206569659740599, 1e-14);
}

TEST(MlpForward, DimensionMismatchIsConfigError) {
    RngStream rng(1, 0);
    const Mlp net = Mlp::glorot(residual_stack(3, 4, 2, 1, Activation::linear), rng);
    EXPECT_THROW(net.predict(Matrix::Zero(2, 1)), ConfigError);
}

TEST(MlpForward, ResidualOutputEqualsPlainOutputPlusInput) {
    RngStream rng(5, 0);
    const Matrix x = random_matrix(6, 7, rng);
    Mlp plain = random_net({{6, 6}, {Activation::elu}, {false}}, 11);
    Mlp skip({{6, 6}, {Activation::elu}, {true}}, plain.layers());
    EXPECT_EQ(skip.predict(x), Matrix(plain.predict(x) + x));
}

TEST(MlpForward, DeterministicAndTapeConsistent) {
    const Mlp net = random_net(residual_stack(4, 8, 3, 2, Activation::sigmoid), 3);
    RngStream rng(9, 0);
    const Matrix x = random_matrix(4, 5, rng);
    const auto a = net.forward(x);
    const auto b = net.forward(x);
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.output, net.predict(x));
    EXPECT_EQ(a.size(), net.spec().num_layers());
}

TEST(MlpBackward, LinearIdentityByHand) {
    Mlp net({{3, 3}, {Activation::linear}, {false}}, {DenseLayer{Matrix::Identity(3, 3), Vector::Zero(3), Activation::linear}});
    Vector in(3), g(3);
    in << 1.0, -2.0, 0.5;
    g << 0.3, 0.7, -1.1;
    const auto grads = net.backward(net.forward(in), g);
    EXPECT_EQ(grads.input, Matrix(g));
    EXPECT_EQ(grads.weights[0], Matrix(g * in.transpose()));
    EXPECT_EQ(grads.biases[0], g);
}

TEST(MlpBackward, SigmoidAtZeroScalesByQuarter) {
    Mlp net({{1, 1}, {Activation::sigmoid}, {false}}, {DenseLayer{Matrix::Ones(1, 1), Vector::Zero(1), Activation::sigmoid}});
    const Matrix x = Matrix::Zero(1, 1);
    const Matrix g = Matrix::Constant(1, 1, 2.0);
    EXPECT_DOUBLE_EQ(net.backward(net.forward(x), g).input(0, 0), 0.5);
}

TEST(MlpBackward, RejectsForeignTape) {
    const Mlp a = random_net(residual_stack(2, 4, 2, 1, Activation::linear), 1);
    const Mlp b = random_net(residual_stack(2, 4, 1, 1, Activation::linear), 1);
    const auto tape = b.forward(Matrix::Ones(2, 1));
    EXPECT_THROW(a.backward(tape, Matrix::Ones(1, 1)), std::logic_error);
}

TEST(MlpBackward, MatchesFiniteDifferencesOnRandomNets) {
    const std::vector<MlpSpec> specs = {
        residual_stack(3, 5, 3, 2, Activation::linear),
        residual_stack(2, 6, 2, 3, Activation::sigmoid),
        MlpSpec{{4, 4, 4}, {Activation::sigmoid, Activation::elu}, {true, true}},
        MlpSpec{{5, 3}, {Activation::elu}, {false}},
    };
    for (std::size_t s = 0; s < specs.size(); ++s) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Mlp net = random_net(specs[s], 100 * s + seed);
            RngStream rng(seed, 7);
            const Matrix x = random_matrix(static_cast<Eigen::Index>(specs[s].input_dim()), 3, rng);
            const Matrix r = random_matrix(static_cast<Eigen::Index>(specs[s].output_dim()), 3, rng);
            EXPECT_LT(max_fd_error(net, x, r, 1e-5), 1e-4) << "spec " << s << " seed " << seed;
        }
    }
}

TEST(MlpBackward, PreactivationSeedSkipsFinalSlope) {
    const Mlp net = random_net(residual_stack(2, 4, 2, 2, Activation::sigmoid), 4);
    RngStream rng(2, 2);
    const Matrix x = random_matrix(2, 3, rng);
    const auto tape = net.forward(x);
    const Matrix g = random_matrix(2, 3, rng);
    const Matrix dz = g.array() * tape.output.array() * (1.0 - tape.output.array());
    const auto via_output = net.backward(tape, g);
    const auto via_pre = net.backward(tape, dz, GradientSeed::final_preactivation);
    EXPECT_LT((via_output.input - via_pre.input).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Parameters, FlattenRoundTrip) {
    Mlp net = random_net(residual_stack(3, 4, 2, 2, Activation::linear), 8);
    Vector flat(static_cast<Eigen::Index>(net.parameter_count()));
    EXPECT_EQ(net.write_parameters(flat, 0), net.parameter_count());
    Mlp copy = random_net(net.spec(), 99);
    copy.read_parameters(flat, 0);
    const Matrix x = Matrix::Ones(3, 2);
    EXPECT_EQ(copy.predict(x), net.predict(x));
}

TEST(Glorot, WeightsWithinLimitAndBiasesZero) {
    RngStream rng(4, 0);
    const Mlp net = Mlp::glorot(residual_stack(4, 32, 5, 2, Activation::linear), rng);
    for (const auto& l : net.layers()) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
        EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), limit);
        EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Adam, FirstStepMovesByLearningRate) {
    AdamState state(3, {});
    Vector p(3), g(3);
    p << 1.0, -2.0, 0.0;
    g << 0.5, -4.0, 1e-3;
    const Vector before = p;
    adam_step(p, g, state);
    // t = 1: m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
    for (Eigen::Index i = 0; i < 3; ++i) {
        EXPECT_NEAR(p[i], before[i] - 1e-3 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
        EXPECT_NEAR(std::abs(p[i] - before[i]), 1e-3, 1e-8);
    }
    EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroGradientFromFreshStateIsFixedPoint) {
    AdamState state(4, {});
    Vector p = Vector::LinSpaced(4, -1.0, 1.0);
    const Vector before = p;
    for (int i = 0; i < 3; ++i) adam_step(p, Vector::Zero(4), state);
    EXPECT_EQ(p, before);
    EXPECT_EQ(state.step, 3u);
}

TEST(Adam, MomentsDecayUnderZeroGradient) {
    AdamState state(1, {});
    Vector p = Vector::Zero(1);
    adam_step(p, Vector::Constant(1, 2.0), state);
    const double m = state.first_moment[0], v = state.second_moment[0];
    adam_step(p, Vector::Zero(1), state);
    EXPECT_DOUBLE_EQ(state.first_moment[0], 0.9 * m);
    EXPECT_DOUBLE_EQ(state.second_moment[0], 0.999 * v);
}

TEST(Adam, TwoStepsMatchHandRecurrence) {
    AdamHyperparameters h{0.01, 0.8, 0.95, 1e-8};
    AdamState state(1, h);
    Vector p = Vector::Constant(1, 0.3);
    const double g = -0.7;
    adam_step(p, Vector::Constant(1, g), state);
    adam_step(p, Vector::Constant(1, g), state);
    // Hand recurrence.
    double m = 0, v = 0, x = 0.3;
    for (int t = 1; t <= 2; ++t) {
        m = 0.8 * m + 0.2 * g;
        v = 0.95 * v + 0.05 * g * g;
        const double mh = m / (1 - std::pow(0.8, t));
        const double vh = v / (1 - std::pow(0.95, t));
        x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    EXPECT_NEAR(p[0], x, 1e-15);
    // With a constant gradient both bias-corrected steps equal lr * sign(g).
    EXPECT_NEAR(p[0], 0.3 + 0.02, 1e-9);
}

TEST(Adam, NonFiniteGradientReportsIteration) {
    AdamState state(2, {});
    Vector p = Vector::Zero(2);
    adam_step(p, Vector::Ones(2), state);
    Vector bad(2);
    bad << 1.0, std::numeric_limits<double>::quiet_NaN();
    try {
        adam_step(p, bad, state);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_EQ(e.iteration(), 1u);
    }
}

TEST(Adam, RejectsInvalidHyperparameters) {
    EXPECT_THROW(AdamState(1, AdamHyperparameters{1e-3, 1.0, 0.999, 1e-8}), ConfigError);
    EXPECT_THROW(AdamState(1, AdamHyperparameters{1e-3, 0.9, 0.999, 0.0}), ConfigError);
}

TEST(GradCheck, QuadraticLossOnLinearLayerIsExact) {
    Mlp net = random_net({{3, 2}, {Activation::linear}, {false}}, 21);
    RngStream rng(3, 3);
    const Matrix x = random_matrix(3, 4, rng);
    const auto loss_at = [&](const Vector& p) {
        Mlp probe = net;
        probe.read_parameters(p, 0);
        return 0.5 * probe.predict(x).squaredNorm();
    };
    const auto tape = net.forward(x);
    const auto grads = net.backward(tape, tape.output);
    Vector analytic(static_cast<Eigen::Index>(net.parameter_count()));
    Mlp::write_gradients(grads, analytic, 0);
    Vector params(static_cast<Eigen::Index>(net.parameter_count()));
    net.write_parameters(params, 0);
    EXPECT_LT(grad_check(params, loss_at, analytic, 1e-4).max_relative_error, 1e-7);
}

TEST(GradCheck, DetectsWrongGradient) {
    const auto loss = [](const Vector& p) { return p.squaredNorm(); };
    Vector p = Vector::LinSpaced(3, 1.0, 3.0);
    const Vector wrong = 2.2 * p;
    const auto r = grad_check(p, loss, wrong, 1e-5);
    EXPECT_GT(r.max_relative_error, 0.05);
}

TEST(GradCheck, ZeroStepRejected) {
    const auto loss = [](const Vector& p) { return p.sum(); };
    EXPECT_THROW(grad_check(Vector::Ones(2), loss, Vector::Ones(2), 0.0), ConfigError);
}
