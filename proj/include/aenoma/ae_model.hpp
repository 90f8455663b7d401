#pragma once

// Transmitter encoder and the two receiver decoders.
//
// The encoder maps a message pair to an I/Q symbol: bits are remapped to +-1,
// the main block produces a raw (I, Q) pair, Sub-Network 2 produces a positive
// gain (softplus) that multiplies both components, and a normalization layer
// rescales the batch so the mean symbol power equals the budget P.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "channel.hpp"
#include "errors.hpp"
#include "nn_core.hpp"
#include "rng.hpp"

namespace aenoma {

using Bits = std::vector<std::uint8_t>;

struct MessagePair {
    Bits bits1;
    Bits bits2;

    bool operator==(const MessagePair&) const = default;
};

/// Integer value of a bit vector, first bit most significant.
inline std::size_t bits_to_index(const Bits& bits) {
    std::size_t v = 0;
    for (auto b : bits) {
        require(b <= 1, "bit entries must be 0 or 1");
        v = (v << 1) | b;
    }
    return v;
}

inline Bits index_to_bits(std::size_t value, std::size_t k) {
    Bits bits(k);
    for (std::size_t j = 0; j < k; ++j) bits[k - 1 - j] = static_cast<std::uint8_t>((value >> j) & 1u);
    return bits;
}

/// Lexicographic message order: bits1 major, bits2 minor.
inline std::size_t message_index(const MessagePair& m) {
    return (bits_to_index(m.bits1) << m.bits2.size()) | bits_to_index(m.bits2);
}

inline MessagePair message_from_index(std::size_t index, std::size_t k1, std::size_t k2) {
    return {index_to_bits(index >> k2, k1), index_to_bits(index & ((std::size_t{1} << k2) - 1), k2)};
}

enum class Normalization { batch, codebook };

inline std::string_view to_string(Normalization n) { return n == Normalization::batch ? "batch" : "codebook"; }

inline Normalization normalization_from_string(std::string_view s) {
    if (s == "batch") return Normalization::batch;
    if (s == "codebook") return Normalization::codebook;
    throw ConfigError("unknown normalization mode '" + std::string(s) + "'");
}

struct Architecture {
    std::size_t k1 = 2;
    std::size_t k2 = 2;
    std::size_t hidden_width = 32;
    std::size_t hidden_layers = 5;
    std::size_t sub_hidden_width = 16;
    std::size_t sub_hidden_layers = 2;
    bool append_gain = false; // decoders also see |h_k|
    double power = 1.0;

    std::size_t message_bits() const { return k1 + k2; }
    std::size_t message_count() const { return std::size_t{1} << (k1 + k2); }

    void validate() const {
        require(k1 >= 1 && k2 >= 1, "each user needs at least one bit");
        require(k1 + k2 <= 16, "at most 16 message bits are supported");
        require(hidden_width >= 1 && hidden_layers >= 1, "main block needs at least one hidden layer");
        require(sub_hidden_width >= 1 && sub_hidden_layers >= 1, "Sub-Network 2 needs a hidden layer");
        require(power > 0.0 && std::isfinite(power), "power budget must be positive");
    }

    bool operator==(const Architecture&) const = default;
};

inline MlpSpec tx_main_spec(const Architecture& a) {
    return residual_stack(a.message_bits(), a.hidden_width, a.hidden_layers, 2, Activation::linear);
}

inline MlpSpec tx_sub_spec(const Architecture& a) {
    return residual_stack(a.message_bits(), a.sub_hidden_width, a.sub_hidden_layers, 1, Activation::linear,
                          /*skips=*/false);
}

inline MlpSpec rx_spec(const Architecture& a, User user) {
    const std::size_t out = user == User::weak ? a.k1 : a.k2;
    return residual_stack(a.append_gain ? 3 : 2, a.hidden_width, a.hidden_layers, out, Activation::sigmoid);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct TxEncoder {
    Mlp main_block;
    Mlp sub_network;
    Normalization normalization = Normalization::codebook;
    double power = 1.0;
    std::size_t k1 = 2;
    std::size_t k2 = 2;

    std::size_t message_count() const { return std::size_t{1} << (k1 + k2); }
};

struct RxDecoder {
    User user = User::weak;
    Mlp main_block;
    bool append_gain = false;

    std::size_t bit_count() const { return main_block.spec().output_dim(); }
};

/// Columns of +-1 encoder inputs for the given messages.
inline Matrix signed_bits(std::span<const MessagePair> pairs, std::size_t k1, std::size_t k2) {
    Matrix m(static_cast<Eigen::Index>(k1 + k2), static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto& p = pairs[n];
        require(p.bits1.size() == k1 && p.bits2.size() == k2, "message pair has wrong bit counts");
        for (std::size_t j = 0; j < k1; ++j) m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n)) = p.bits1[j] ? 1.0 : -1.0;
        for (std::size_t j = 0; j < k2; ++j)
            m(static_cast<Eigen::Index>(k1 + j), static_cast<Eigen::Index>(n)) = p.bits2[j] ? 1.0 : -1.0;
    }
    return m;
}

/// Signed-bit columns for every message in lexicographic order.
inline Matrix all_messages_signed(std::size_t k1, std::size_t k2) {
    const std::size_t count = std::size_t{1} << (k1 + k2);
    Matrix m(static_cast<Eigen::Index>(k1 + k2), static_cast<Eigen::Index>(count));
    for (std::size_t idx = 0; idx < count; ++idx)
        for (std::size_t j = 0; j < k1 + k2; ++j)
            m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(idx)) =
                ((idx >> (k1 + k2 - 1 - j)) & 1u) ? 1.0 : -1.0;
    return m;
}

/// Encoder forward record. Columns [0, batch) are the requested messages; in
/// codebook mode the full codebook is appended after them to supply the
/// normalization statistics.
struct TxPass {
    ForwardTape main;
    ForwardTape sub;
    Matrix raw;   // 2 x cols, gain-scaled main output
    Matrix gain;  // 1 x cols, softplus(sub output)
    Eigen::Index batch = 0;
    Eigen::Index stats_begin = 0;
    Eigen::Index stats_count = 0;
    double stats_power = 0.0; // sum |raw|^2 over the statistics columns
    double scale = 1.0;
    Matrix symbols; // 2 x batch, normalized
};

inline TxPass tx_forward(const TxEncoder& tx, const Matrix& batch_bits, Normalization mode) {
    require(batch_bits.cols() > 0, "encode: empty batch");
    TxPass pass;
    pass.batch = batch_bits.cols();
    Matrix input;
    if (mode == Normalization::codebook) {
        const Matrix book = all_messages_signed(tx.k1, tx.k2);
        input.resize(batch_bits.rows(), batch_bits.cols() + book.cols());
        input << batch_bits, book;
        pass.stats_begin = pass.batch;
        pass.stats_count = book.cols();
    } else {
        input = batch_bits;
        pass.stats_begin = 0;
        pass.stats_count = pass.batch;
    }
    pass.main = tx.main_block.forward(input);
    pass.sub = tx.sub_network.forward(input);
    pass.gain = pass.sub.output.unaryExpr([](double v) { return softplus(v); });
    pass.raw = pass.main.output.array().rowwise() * pass.gain.row(0).array();
    pass.stats_power = pass.raw.middleCols(pass.stats_begin, pass.stats_count).squaredNorm();
    if (!(pass.stats_power > 0.0))
        throw DegenerateInputError("power normalization: all-zero symbols");
    pass.scale = std::sqrt(tx.power * static_cast<double>(pass.stats_count) / pass.stats_power);
    pass.symbols = pass.scale * pass.raw.leftCols(pass.batch);
    return pass;
}

struct TxGradients {
    MlpGradients main;
    MlpGradients sub;
};

/// Backpropagates d loss / d symbols (2 x batch) through normalization, gain and both sub-networks.
inline TxGradients tx_backward(const TxEncoder& tx, const TxPass& pass, const Matrix& symbol_grad) {
    require(symbol_grad.rows() == 2 && symbol_grad.cols() == pass.batch, "symbol gradient has wrong shape");
    Matrix raw_grad = Matrix::Zero(2, pass.raw.cols());
    raw_grad.leftCols(pass.batch) = pass.scale * symbol_grad;
    const double scale_grad = (symbol_grad.array() * pass.raw.leftCols(pass.batch).array()).sum();
    // scale = sqrt(P n / S)  =>  d scale / d S = -scale / (2 S)
    const double power_grad = scale_grad * (-pass.scale / (2.0 * pass.stats_power));
    raw_grad.middleCols(pass.stats_begin, pass.stats_count) +=
        2.0 * power_grad * pass.raw.middleCols(pass.stats_begin, pass.stats_count);

    const Matrix main_grad = raw_grad.array().rowwise() * pass.gain.row(0).array();
    Matrix sub_grad = (raw_grad.array() * pass.main.output.array()).colwise().sum();
    for (Eigen::Index c = 0; c < sub_grad.cols(); ++c) sub_grad(0, c) *= sigmoid(pass.sub.output(0, c));

    return {tx.main_block.backward(pass.main, main_grad), tx.sub_network.backward(pass.sub, sub_grad)};
}

inline std::vector<Complex> to_complex(const Matrix& iq) {
    std::vector<Complex> out(static_cast<std::size_t>(iq.cols()));
    for (Eigen::Index c = 0; c < iq.cols(); ++c) out[static_cast<std::size_t>(c)] = {iq(0, c), iq(1, c)};
    return out;
}

inline std::vector<Complex> encode_batch(const TxEncoder& tx, std::span<const MessagePair> pairs, Normalization mode) {
    return to_complex(tx_forward(tx, signed_bits(pairs, tx.k1, tx.k2), mode).symbols);
}

inline std::vector<Complex> encode_batch(const TxEncoder& tx, std::span<const MessagePair> pairs) {
    return encode_batch(tx, pairs, tx.normalization);
}

/// Rescales so the empirical mean power is exactly `power`.
inline std::vector<Complex> normalize_power(std::span<const Complex> symbols, double power) {
    require(power > 0.0, "power budget must be positive");
    double total = 0.0;
    for (auto s : symbols) total += std::norm(s);
    if (symbols.empty() || !(total > 0.0)) throw DegenerateInputError("normalize_power: all-zero batch");
    const double scale = std::sqrt(power * static_cast<double>(symbols.size()) / total);
    std::vector<Complex> out(symbols.begin(), symbols.end());
    for (auto& s : out) s *= scale;
    return out;
}

struct CodebookEntry {
    MessagePair pair;
    Complex symbol;
};

struct Codebook {
    std::size_t k1 = 2;
    std::size_t k2 = 2;
    std::vector<CodebookEntry> entries;
    double mean_power = 0.0;

    std::size_t size() const { return entries.size(); }
};

inline Codebook make_codebook(std::size_t k1, std::size_t k2, std::span<const Complex> symbols) {
    require(symbols.size() == (std::size_t{1} << (k1 + k2)), "codebook needs one symbol per message pair");
    Codebook book{k1, k2, {}, 0.0};
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        book.entries.push_back({message_from_index(i, k1, k2), symbols[i]});
        book.mean_power += std::norm(symbols[i]);
    }
    book.mean_power /= static_cast<double>(symbols.size());
    return book;
}

inline Codebook build_codebook(const TxEncoder& tx) {
    const Matrix inputs = all_messages_signed(tx.k1, tx.k2);
    const auto pass = tx_forward(tx, inputs, Normalization::codebook);
    return make_codebook(tx.k1, tx.k2, to_complex(pass.symbols));
}

/// Decoder inputs: rows (Re, Im[, |h|]) per equalized sample.
inline Matrix rx_inputs(std::span<const Complex> equalized, std::span<const double> gain_magnitudes, bool append_gain) {
    Matrix m(append_gain ? 3 : 2, static_cast<Eigen::Index>(equalized.size()));
    if (append_gain) require(gain_magnitudes.size() == equalized.size(), "one gain per sample required");
    for (std::size_t n = 0; n < equalized.size(); ++n) {
        const auto c = static_cast<Eigen::Index>(n);
        m(0, c) = equalized[n].real();
        m(1, c) = equalized[n].imag();
        if (append_gain) m(2, c) = gain_magnitudes[n];
    }
    return m;
}

inline std::vector<double> decode(const RxDecoder& rx, Complex equalized_sample, double gain_magnitude = 0.0) {
    const Complex y[1] = {equalized_sample};
    const double g[1] = {gain_magnitude};
    const Matrix out = rx.main_block.predict(rx_inputs(y, g, rx.append_gain));
    return {out.data(), out.data() + out.size()};
}

/// 1 where p >= 0.5 (ties decide 1), else 0.
inline Bits hard_bits(std::span<const double> probs) {
    Bits bits(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) bits[i] = probs[i] >= 0.5 ? 1 : 0;
    return bits;
}

/// Transmitter plus both receivers; the unit that is trained and serialized.
struct AeNomaSystem {
    Architecture arch;
    TxEncoder tx;
    RxDecoder rx1;
    RxDecoder rx2;

    static AeNomaSystem initialize(const Architecture& arch, RngStream& rng) {
        arch.validate();
        AeNomaSystem s;
        s.arch = arch;
        s.tx.main_block = Mlp::glorot(tx_main_spec(arch), rng);
        s.tx.sub_network = Mlp::glorot(tx_sub_spec(arch), rng);
        s.tx.power = arch.power;
        s.tx.k1 = arch.k1;
        s.tx.k2 = arch.k2;
        s.tx.normalization = Normalization::codebook;
        s.rx1 = {User::weak, Mlp::glorot(rx_spec(arch, User::weak), rng), arch.append_gain};
        s.rx2 = {User::strong, Mlp::glorot(rx_spec(arch, User::strong), rng), arch.append_gain};
        return s;
    }

    const RxDecoder& decoder(User u) const { return u == User::weak ? rx1 : rx2; }

    std::size_t parameter_count() const {
        return tx.main_block.parameter_count() + tx.sub_network.parameter_count() +
               rx1.main_block.parameter_count() + rx2.main_block.parameter_count();
    }

    /// Flat order: Tx main, Tx Sub-Network 2, Rx1, Rx2.
    Vector parameters() const {
        Vector p(static_cast<Eigen::Index>(parameter_count()));
        std::size_t off = 0;
        off = tx.main_block.write_parameters(p, off);
        off = tx.sub_network.write_parameters(p, off);
        off = rx1.main_block.write_parameters(p, off);
        rx2.main_block.write_parameters(p, off);
        return p;
    }

    void set_parameters(const Vector& p) {
        require(static_cast<std::size_t>(p.size()) == parameter_count(), "parameter vector has wrong length");
        std::size_t off = 0;
        off = tx.main_block.read_parameters(p, off);
        off = tx.sub_network.read_parameters(p, off);
        off = rx1.main_block.read_parameters(p, off);
        rx2.main_block.read_parameters(p, off);
    }

    /// Half-open ranges of each network inside the flat parameter vector.
    struct Ranges {
        std::size_t tx_begin, tx_end, rx1_begin, rx1_end, rx2_begin, rx2_end;
    };

    Ranges ranges() const {
        const std::size_t tx_n = tx.main_block.parameter_count() + tx.sub_network.parameter_count();
        const std::size_t r1 = rx1.main_block.parameter_count();
        const std::size_t r2 = rx2.main_block.parameter_count();
        return {0, tx_n, tx_n, tx_n + r1, tx_n + r1, tx_n + r1 + r2};
    }
};

} // namespace aenoma
