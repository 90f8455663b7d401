#pragma once

// Two-user downlink channel y_k = h_k x + n_k with a shared noise variance.

#include <cmath>
#include <complex>
#include <string>

#include "errors.hpp"
#include "rng.hpp"

namespace aenoma {

using Complex = std::complex<double>;

enum class User { weak = 1, strong = 2 };

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double ratio) { return 10.0 * std::log10(ratio); }

/// Noise variance per complex sample realizing SNR_1 = |h1|^2 P / sigma2.
inline double snr_to_sigma2(double snr1_db, Complex h1, double power = 1.0) {
    require(power > 0.0, "transmit power must be positive");
    if (std::abs(h1) == 0.0) throw ConfigError("snr_to_sigma2: zero channel gain");
    return std::norm(h1) * power / db_to_linear(snr1_db);
}

/// Strong-user SNR implied by a weak-user SNR and the two gains (shared sigma2).
inline double snr2_from(double snr1_db, Complex h1, Complex h2) {
    if (std::abs(h1) == 0.0 || std::abs(h2) == 0.0) throw ConfigError("snr2_from: zero channel gain");
    return snr1_db + 20.0 * std::log10(std::abs(h2) / std::abs(h1));
}

class ChannelRealization {
public:
    ChannelRealization(Complex h1, Complex h2, double sigma2) : h1_(h1), h2_(h2), sigma2_(sigma2) {
        require(std::norm(h1) <= std::norm(h2), "user 1 must be the weak user: |h1|^2 <= |h2|^2");
        require(std::abs(h1) > 0.0, "channel gains must be nonzero");
        require(sigma2 > 0.0 && std::isfinite(sigma2), "noise variance must be positive and finite");
    }

    Complex h1() const { return h1_; }
    Complex h2() const { return h2_; }
    Complex gain(User u) const { return u == User::weak ? h1_ : h2_; }
    double sigma2() const { return sigma2_; }

private:
    Complex h1_;
    Complex h2_;
    double sigma2_;
};

/// y = h_k x + n with n ~ CN(0, sigma2).
inline Complex apply_channel(Complex x, const ChannelRealization& ch, User user, RngStream& rng) {
    return ch.gain(user) * x + rng.complex_gaussian(ch.sigma2());
}

inline Complex equalize(Complex y, Complex h) {
    if (std::abs(h) == 0.0) throw ConfigError("equalize: zero channel gain");
    return y / h;
}

/// Distribution of the (real, positive) strong-user gain; h1 is fixed.
struct ChannelDistribution {
    enum class Kind { fixed, uniform };

    Kind kind = Kind::fixed;
    double h1 = 1.0;
    double h2 = 2.0;     // fixed value
    double h2_min = 2.0; // uniform bounds
    double h2_max = 2.0;

    static ChannelDistribution fixed(double h1, double h2) {
        ChannelDistribution d;
        d.kind = Kind::fixed;
        d.h1 = h1;
        d.h2 = d.h2_min = d.h2_max = h2;
        d.validate();
        return d;
    }

    static ChannelDistribution uniform(double h1, double lo, double hi) {
        ChannelDistribution d;
        d.kind = Kind::uniform;
        d.h1 = h1;
        d.h2_min = lo;
        d.h2_max = hi;
        d.h2 = 0.5 * (lo + hi);
        d.validate();
        return d;
    }

    void validate() const {
        require(h1 > 0.0, "h1 must be positive");
        if (kind == Kind::fixed) {
            require(h2 >= h1, "fixed h2 must satisfy h2 >= h1");
        } else {
            require(h2_min <= h2_max, "uniform h2 needs h_min <= h_max");
            require(h2_min >= h1, "uniform h2 needs h_min >= h1 so user ordering survives sampling");
        }
    }

    bool operator==(const ChannelDistribution&) const = default;
};

inline double sample_h2(const ChannelDistribution& dist, RngStream& rng) {
    if (dist.kind == ChannelDistribution::Kind::fixed) return dist.h2;
    return rng.uniform(dist.h2_min, dist.h2_max);
}

} // namespace aenoma
