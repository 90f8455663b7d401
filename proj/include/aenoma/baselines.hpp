#pragma once

// Reference systems: QPSK superposition NOMA with hard SIC at the strong user,
// Gray-coded 16-QAM, their Monte-Carlo oracles, and ML detection on any codebook.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "ae_model.hpp"
#include "channel.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace aenoma {

/// Gaussian tail probability P(N(0,1) > x).
inline double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

struct QpskNomaConfig {
    double alpha = 0.7; // weak-user power fraction
    double power = 1.0;
    double h1 = 1.0;
    double h2 = 2.0;
    double sigma2 = 0.1;
    bool allow_overlap = false; // permits alpha <= 0.5

    void validate() const {
        if (allow_overlap) {
            require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
        } else {
            require(alpha > 0.5 && alpha <= 1.0,
                    "alpha must lie in (0.5, 1]: below 0.5 the superimposed QPSK points overlap or reorder "
                    "(set the override to evaluate anyway)");
        }
        require(power > 0.0, "power must be positive");
        require(sigma2 > 0.0, "noise variance must be positive");
        require(h1 > 0.0 && h2 >= h1, "gains must satisfy 0 < h1 <= h2");
    }

    static QpskNomaConfig at_snr1(double alpha, double h1, double h2, double snr1_db, double power = 1.0) {
        return {alpha, power, h1, h2, snr_to_sigma2(snr1_db, h1, power)};
    }
};

/// Per real dimension: a1 = sqrt(alpha P / 2), a2 = sqrt((1 - alpha) P / 2), sigma_d = sqrt(sigma2 / 2).
struct PerDimAmplitudes {
    double a1;
    double a2;
    double sigma_d;

    explicit PerDimAmplitudes(const QpskNomaConfig& c)
        : a1(std::sqrt(c.alpha * c.power / 2.0)), a2(std::sqrt((1.0 - c.alpha) * c.power / 2.0)),
          sigma_d(std::sqrt(c.sigma2 / 2.0)) {}
};

/// Weak user detecting its Gray bit per dimension with the strong user's signal as interference.
inline double ber_qpsk_noma_weak(const QpskNomaConfig& cfg) {
    cfg.validate();
    const PerDimAmplitudes a(cfg);
    return 0.5 * (q_function(cfg.h1 * (a.a1 + a.a2) / a.sigma_d) + q_function(cfg.h1 * (a.a1 - a.a2) / a.sigma_d));
}

/// Strong user with hard-decision SIC per dimension.
inline double ber_qpsk_noma_strong_sic(const QpskNomaConfig& cfg) {
    cfg.validate();
    const PerDimAmplitudes a(cfg);
    const double x1 = cfg.h2 * a.a1 / a.sigma_d;
    const double x2 = cfg.h2 * a.a2 / a.sigma_d;
    return q_function(x2) +
           0.5 * (q_function(2 * x1 + x2) - q_function(x1 + x2) + q_function(x1 - x2) - q_function(2 * x1 - x2));
}

struct MonteCarloBer {
    double ber1 = 0.0;
    double ber2 = 0.0;
    double stderr1 = 0.0;
    double stderr2 = 0.0;
    std::uint64_t n_bits = 0; // per user
    std::uint64_t errors1 = 0;
    std::uint64_t errors2 = 0;
};

inline double binomial_stderr(double p, std::uint64_t n) {
    return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

/// Gray QPSK superposition, weak-user direct detection, strong-user hard SIC.
inline MonteCarloBer mc_qpsk_noma(const QpskNomaConfig& cfg, std::uint64_t n_symbols, RngStream& rng) {
    cfg.validate();
    require(n_symbols >= 10000, "Monte-Carlo needs at least 1e4 symbols");
    const PerDimAmplitudes a(cfg);
    std::uint64_t e1 = 0, e2 = 0;
    for (std::uint64_t s = 0; s < n_symbols; ++s) {
        const std::uint64_t draw = rng.next_u64();
        for (int dim = 0; dim < 2; ++dim) {
            const bool b1 = (draw >> (2 * dim)) & 1u;
            const bool b2 = (draw >> (2 * dim + 1)) & 1u;
            const double s1 = b1 ? -1.0 : 1.0;
            const double s2 = b2 ? -1.0 : 1.0;
            const double tx = a.a1 * s1 + a.a2 * s2;
            const double r1 = cfg.h1 * tx + a.sigma_d * rng.gaussian();
            const double r2 = cfg.h2 * tx + a.sigma_d * rng.gaussian();
            if ((r1 < 0.0) != b1) ++e1;
            const double s1_hat = r2 < 0.0 ? -1.0 : 1.0;
            const double residual = r2 - cfg.h2 * a.a1 * s1_hat;
            if ((residual < 0.0) != b2) ++e2;
        }
    }
    MonteCarloBer out;
    out.n_bits = 2 * n_symbols;
    out.errors1 = e1;
    out.errors2 = e2;
    out.ber1 = static_cast<double>(e1) / static_cast<double>(out.n_bits);
    out.ber2 = static_cast<double>(e2) / static_cast<double>(out.n_bits);
    out.stderr1 = binomial_stderr(out.ber1, out.n_bits);
    out.stderr2 = binomial_stderr(out.ber2, out.n_bits);
    return out;
}

/// Gray-coded 16-QAM per-bit BER at symbol SNR Es/N0 (dB).
inline double ber_16qam(double snr_symbol_db) {
    const double u = std::sqrt(db_to_linear(snr_symbol_db) / 5.0);
    return 0.25 * (3.0 * q_function(u) + 2.0 * q_function(3.0 * u) - q_function(5.0 * u));
}

/// Gray 4-PAM level for bits (msb, lsb): 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
inline double gray_pam4_level(bool msb, bool lsb) {
    if (!msb) return lsb ? -1.0 : -3.0;
    return lsb ? 1.0 : 3.0;
}

/// Monte-Carlo Gray 16-QAM at unit symbol energy; ber1 holds the per-bit BER, ber2 mirrors it.
inline MonteCarloBer mc_16qam(double snr_symbol_db, std::uint64_t n_symbols, RngStream& rng) {
    require(n_symbols >= 10000, "Monte-Carlo needs at least 1e4 symbols");
    const double d = std::sqrt(1.0 / 10.0);
    const double sigma_d = std::sqrt(1.0 / db_to_linear(snr_symbol_db) / 2.0);
    std::uint64_t errors = 0;
    for (std::uint64_t s = 0; s < n_symbols; ++s) {
        const std::uint64_t draw = rng.next_u64();
        for (int dim = 0; dim < 2; ++dim) {
            const bool msb = (draw >> (2 * dim)) & 1u;
            const bool lsb = (draw >> (2 * dim + 1)) & 1u;
            const double r = d * gray_pam4_level(msb, lsb) + sigma_d * rng.gaussian();
            const bool msb_hat = r > 0.0;
            const bool lsb_hat = std::abs(r) < 2.0 * d;
            errors += (msb_hat != msb) + (lsb_hat != lsb);
        }
    }
    MonteCarloBer out;
    out.n_bits = 4 * n_symbols;
    out.errors1 = out.errors2 = errors;
    out.ber1 = out.ber2 = static_cast<double>(errors) / static_cast<double>(out.n_bits);
    out.stderr1 = out.stderr2 = binomial_stderr(out.ber1, out.n_bits);
    return out;
}

/// Unit-power Gray 16-QAM labelled as a two-user codebook: bits1 pick the
/// quadrant (I and Q sign bits), bits2 the inner/outer ring per dimension.
inline Codebook gray_16qam_codebook() {
    std::vector<Complex> symbols(16);
    const double d = std::sqrt(1.0 / 10.0);
    for (std::size_t idx = 0; idx < 16; ++idx) {
        const auto m = message_from_index(idx, 2, 2);
        symbols[idx] = {d * gray_pam4_level(m.bits1[0], m.bits2[0]), d * gray_pam4_level(m.bits1[1], m.bits2[1])};
    }
    return make_codebook(2, 2, symbols);
}

/// Fixed QPSK superposition x = sqrt(alpha P) s1 + sqrt((1 - alpha) P) s2 with Gray QPSK per user.
inline Codebook qpsk_noma_codebook(double alpha, double power = 1.0) {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    const auto qpsk = [](const Bits& b) {
        return Complex{b[0] ? -1.0 : 1.0, b[1] ? -1.0 : 1.0} / std::numbers::sqrt2;
    };
    std::vector<Complex> symbols(16);
    for (std::size_t idx = 0; idx < 16; ++idx) {
        const auto m = message_from_index(idx, 2, 2);
        symbols[idx] = std::sqrt(alpha * power) * qpsk(m.bits1) + std::sqrt((1.0 - alpha) * power) * qpsk(m.bits2);
    }
    return make_codebook(2, 2, symbols);
}

/// Index of the entry minimizing |y - h x|^2; ties go to the lowest index.
inline std::size_t ml_detect_index(Complex y, const Codebook& book, Complex h) {
    require(std::abs(h) > 0.0, "ml_detect: zero channel gain");
    require(!book.entries.empty(), "ml_detect: empty codebook");
    std::size_t best = 0;
    double best_metric = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < book.entries.size(); ++i) {
        const double metric = std::norm(y - h * book.entries[i].symbol);
        if (metric < best_metric) {
            best_metric = metric;
            best = i;
        }
    }
    return best;
}

inline MessagePair ml_detect(Complex y, const Codebook& book, Complex h) {
    return book.entries[ml_detect_index(y, book, h)].pair;
}

} // namespace aenoma
