#pragma once

// Monte-Carlo BER measurement of trained systems, constellation reports,
// fairness metrics and side-by-side comparison against the baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ae_model.hpp"
#include "baselines.hpp"
#include "channel.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace aenoma {

struct BerPoint {
    double snr1_db = 0.0;
    double ber1 = 0.0;
    double ber2 = 0.0;
    std::uint64_t n_bits = 0;  // user 1 bits examined
    std::uint64_t n_bits2 = 0; // user 2 bits examined (equals n_bits when k1 == k2)
    double stderr1 = 0.0;
    double stderr2 = 0.0;
    std::uint64_t n_error_events1 = 0;
    std::uint64_t n_error_events2 = 0;
    std::uint64_t n_symbols = 0;
    bool zero_errors = false; // some user saw no error at all

    double worse() const { return std::max(ber1, ber2); }
};

enum class Detector { neural, maximum_likelihood };

inline std::string_view to_string(Detector d) { return d == Detector::neural ? "neural" : "ml"; }

/// Grid "start:stop:step" (inclusive stop) or a comma separated list.
inline std::vector<double> parse_snr_grid(const std::string& text) {
    std::vector<double> grid;
    try {
        if (text.find(':') != std::string::npos) {
            std::vector<double> parts;
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ':')) parts.push_back(std::stod(item));
            require(parts.size() == 3, "SNR grid must be start:stop:step");
            require(parts[2] > 0.0 && parts[1] >= parts[0], "SNR grid needs step > 0 and stop >= start");
            const auto count = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
            for (std::size_t i = 0; i < count; ++i) grid.push_back(parts[0] + static_cast<double>(i) * parts[2]);
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
        }
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError("cannot parse SNR grid '" + text + "'");
    }
    require(!grid.empty(), "SNR grid is empty");
    return grid;
}

struct EvalSettings {
    double h1 = 1.0;
    double h2 = 2.0;
    std::vector<double> snr_grid = parse_snr_grid("0:20:1");
    std::uint64_t min_error_events = 100;
    std::uint64_t max_symbols = 10'000'000;
    std::uint64_t chunk_symbols = 4096;
    std::uint64_t seed = 1;
    Detector detector = Detector::neural;
    unsigned workers = 1;

    void validate() const {
        require(h1 > 0.0 && h2 >= h1, "evaluation gains must satisfy 0 < h1 <= h2");
        require(!snr_grid.empty(), "SNR grid is empty");
        require(max_symbols >= 1 && chunk_symbols >= 1, "symbol budgets must be positive");
    }
};

/// Stream id of SNR point i; shards never share a stream.
inline constexpr std::uint64_t eval_stream_id(std::size_t point) { return 1000 + point; }

namespace detail {

inline BerPoint measure_point(const AeNomaSystem& sys, const Codebook& book, const EvalSettings& s, std::size_t point) {
    const double snr1 = s.snr_grid[point];
    const ChannelRealization ch(s.h1, s.h2, snr_to_sigma2(snr1, s.h1, sys.arch.power));
    RngStream rng(s.seed, eval_stream_id(point));
    const std::size_t k1 = sys.arch.k1, k2 = sys.arch.k2;
    const std::size_t m = book.size();

    std::uint64_t done = 0, e1 = 0, e2 = 0;
    std::vector<std::size_t> msgs;
    std::vector<Complex> y1, y2, eq1, eq2;
    while (done < s.max_symbols && (e1 < s.min_error_events || e2 < s.min_error_events)) {
        const auto n = static_cast<std::size_t>(std::min(s.chunk_symbols, s.max_symbols - done));
        msgs.resize(n);
        y1.resize(n);
        y2.resize(n);
        eq1.resize(n);
        eq2.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            msgs[i] = static_cast<std::size_t>(rng.below(m));
            const Complex x = book.entries[msgs[i]].symbol;
            y1[i] = apply_channel(x, ch, User::weak, rng);
            y2[i] = apply_channel(x, ch, User::strong, rng);
            eq1[i] = equalize(y1[i], ch.h1());
            eq2[i] = equalize(y2[i], ch.h2());
        }
        if (s.detector == Detector::neural) {
            const std::vector<double> g1(n, std::abs(ch.h1())), g2(n, std::abs(ch.h2()));
            const Matrix p1 = sys.rx1.main_block.predict(rx_inputs(eq1, g1, sys.rx1.append_gain));
            const Matrix p2 = sys.rx2.main_block.predict(rx_inputs(eq2, g2, sys.rx2.append_gain));
            for (std::size_t i = 0; i < n; ++i) {
                const auto& sent = book.entries[msgs[i]].pair;
                const auto c = static_cast<Eigen::Index>(i);
                for (std::size_t j = 0; j < k1; ++j)
                    e1 += (p1(static_cast<Eigen::Index>(j), c) >= 0.5 ? 1u : 0u) != sent.bits1[j];
                for (std::size_t j = 0; j < k2; ++j)
                    e2 += (p2(static_cast<Eigen::Index>(j), c) >= 0.5 ? 1u : 0u) != sent.bits2[j];
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                const auto& sent = book.entries[msgs[i]].pair;
                const auto& got1 = book.entries[ml_detect_index(y1[i], book, ch.h1())].pair;
                const auto& got2 = book.entries[ml_detect_index(y2[i], book, ch.h2())].pair;
                for (std::size_t j = 0; j < k1; ++j) e1 += got1.bits1[j] != sent.bits1[j];
                for (std::size_t j = 0; j < k2; ++j) e2 += got2.bits2[j] != sent.bits2[j];
            }
        }
        done += n;
    }

    BerPoint p;
    p.snr1_db = snr1;
    p.n_symbols = done;
    p.n_bits = done * k1;
    p.n_bits2 = done * k2;
    p.n_error_events1 = e1;
    p.n_error_events2 = e2;
    p.ber1 = static_cast<double>(e1) / static_cast<double>(p.n_bits);
    p.ber2 = static_cast<double>(e2) / static_cast<double>(p.n_bits2);
    p.stderr1 = binomial_stderr(p.ber1, p.n_bits);
    p.stderr2 = binomial_stderr(p.ber2, p.n_bits2);
    p.zero_errors = e1 == 0 || e2 == 0;
    return p;
}

} // namespace detail

/// Per SNR point: stream messages through codebook -> channel -> equalize -> detect
/// until both users reach min_error_events or max_symbols is exhausted.
inline std::vector<BerPoint> measure_ber(const AeNomaSystem& sys, const EvalSettings& settings) {
    settings.validate();
    if (sys.parameter_count() == 0) throw ConfigError("measure_ber: model has no parameters");
    const Codebook book = build_codebook(sys.tx);
    std::vector<BerPoint> curve(settings.snr_grid.size());
    if (settings.workers <= 1) {
        for (std::size_t i = 0; i < curve.size(); ++i) curve[i] = detail::measure_point(sys, book, settings, i);
        return curve;
    }
    for (std::size_t begin = 0; begin < curve.size(); begin += settings.workers) {
        std::vector<std::future<BerPoint>> jobs;
        const std::size_t end = std::min(curve.size(), begin + settings.workers);
        for (std::size_t i = begin; i < end; ++i)
            jobs.push_back(std::async(std::launch::async, [&, i] { return detail::measure_point(sys, book, settings, i); }));
        for (std::size_t i = begin; i < end; ++i) curve[i] = jobs[i - begin].get();
    }
    return curve;
}

struct ClusterGroup {
    Bits bits;                        // the user's own bit pattern
    std::vector<std::size_t> members; // codebook indices carrying it
    Complex centroid;
    double spread = 0.0; // RMS distance of members from the centroid
};

struct ConstellationReport {
    Codebook codebook;
    double min_pairwise_distance = 0.0;
    double mean_power = 0.0;
    std::vector<ClusterGroup> user1_groups;
    std::vector<ClusterGroup> user2_groups;
};

inline ConstellationReport constellation_report(const Codebook& book) {
    ConstellationReport r;
    r.codebook = book;
    double power = 0.0;
    double min_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < book.size(); ++i) {
        power += std::norm(book.entries[i].symbol);
        for (std::size_t j = i + 1; j < book.size(); ++j)
            min_d = std::min(min_d, std::abs(book.entries[i].symbol - book.entries[j].symbol));
    }
    r.mean_power = book.size() ? power / static_cast<double>(book.size()) : 0.0;
    r.min_pairwise_distance = book.size() > 1 ? min_d : 0.0;

    const auto group = [&](std::size_t k, bool first_user) {
        std::vector<ClusterGroup> groups(std::size_t{1} << k);
        for (std::size_t g = 0; g < groups.size(); ++g) groups[g].bits = index_to_bits(g, k);
        for (std::size_t i = 0; i < book.size(); ++i) {
            const auto& pair = book.entries[i].pair;
            groups[bits_to_index(first_user ? pair.bits1 : pair.bits2)].members.push_back(i);
        }
        for (auto& g : groups) {
            Complex sum{};
            for (auto i : g.members) sum += book.entries[i].symbol;
            g.centroid = sum / static_cast<double>(g.members.size());
            double sq = 0.0;
            for (auto i : g.members) sq += std::norm(book.entries[i].symbol - g.centroid);
            g.spread = std::sqrt(sq / static_cast<double>(g.members.size()));
        }
        return groups;
    };
    r.user1_groups = group(book.k1, true);
    r.user2_groups = group(book.k2, false);
    return r;
}

inline ConstellationReport extract_constellation(const TxEncoder& tx) { return constellation_report(build_codebook(tx)); }

/// Largest decade gap |log10 ber1 - log10 ber2| over points where both BERs reach `floor`.
inline std::optional<double> fairness_gap(const std::vector<BerPoint>& curve, double floor) {
    require(floor > 0.0, "fairness_gap: floor must be positive");
    std::optional<double> gap;
    for (const auto& p : curve) {
        if (p.ber1 < floor || p.ber2 < floor) continue;
        const double g = std::abs(std::log10(p.ber1) - std::log10(p.ber2));
        gap = gap ? std::max(*gap, g) : g;
    }
    return gap;
}

enum class RowSource { measured, closed_form, literature_constant };

inline std::string_view to_string(RowSource s) {
    switch (s) {
    case RowSource::measured: return "measured";
    case RowSource::closed_form: return "closed-form";
    case RowSource::literature_constant: return "literature-constant";
    }
    return "?";
}

struct ComparisonRow {
    std::string method;
    double snr1_db = 0.0;
    double worse_ber = 0.0;
    RowSource source = RowSource::measured;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
};

/// Published worse-user BERs of other schemes, used verbatim as reference rows.
struct LiteratureRow {
    std::string method;
    double snr1_db = 0.0;
    double worse_ber = 0.0;
};

struct CompareSettings {
    EvalSettings eval;
    double alpha = 0.7;
    std::vector<LiteratureRow> literature;
};

inline ComparisonTable compare_with_baselines(const AeNomaSystem& sys, const CompareSettings& cfg) {
    ComparisonTable table;
    const auto curve = measure_ber(sys, cfg.eval);
    for (const auto& p : curve) table.rows.push_back({"AE-NOMA", p.snr1_db, p.worse(), RowSource::measured});
    for (double snr : cfg.eval.snr_grid) {
        const auto q = QpskNomaConfig::at_snr1(cfg.alpha, cfg.eval.h1, cfg.eval.h2, snr, sys.arch.power);
        std::ostringstream name;
        name << "QPSK-NOMA (alpha=" << cfg.alpha << ")";
        table.rows.push_back(
            {name.str(), snr, std::max(ber_qpsk_noma_weak(q), ber_qpsk_noma_strong_sic(q)), RowSource::closed_form});
    }
    for (double snr : cfg.eval.snr_grid)
        table.rows.push_back(
            {"16-QAM (strong-user SNR)", snr, ber_16qam(snr2_from(snr, cfg.eval.h1, cfg.eval.h2)), RowSource::closed_form});
    for (const auto& lit : cfg.literature)
        table.rows.push_back({lit.method, lit.snr1_db, lit.worse_ber, RowSource::literature_constant});
    return table;
}

struct NoisySample {
    Complex point;
    std::size_t label = 0; // index of the selected user's bit pattern
};

/// Scatter plot: noiseless codebook points as crosses, optional received samples
/// as dots colored by the selected user's bits.
inline std::string render_constellation_svg(const ConstellationReport& report, const std::vector<NoisySample>& noisy = {},
                                            const std::string& title = "super-constellation") {
    static constexpr const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                              "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
                                              "#8c6d31", "#843c39", "#7b4173", "#3182bd"};
    constexpr double size = 480.0, margin = 40.0;
    double extent = 0.0;
    for (const auto& e : report.codebook.entries)
        extent = std::max({extent, std::abs(e.symbol.real()), std::abs(e.symbol.imag())});
    for (const auto& s : noisy) extent = std::max({extent, std::abs(s.point.real()), std::abs(s.point.imag())});
    if (!(extent > 0.0) || !std::isfinite(extent)) extent = 1.0;
    extent *= 1.1;
    const double half = (size - 2 * margin) / 2.0;
    const double cx = size / 2.0, cy = size / 2.0;
    const auto px = [&](double v) { return cx + v / extent * half; };
    const auto py = [&](double v) { return cy - v / extent * half; };

    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
       << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
    os << "<title>";
    for (char ch : title) {
        switch (ch) {
        case '&': os << "&amp;"; break;
        case '<': os << "&lt;"; break;
        case '>': os << "&gt;"; break;
        default: os << ch;
        }
    }
    os << "</title>\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
    os << "<line class=\"axis\" x1=\"" << margin << "\" y1=\"" << cy << "\" x2=\"" << size - margin << "\" y2=\"" << cy
       << "\" stroke=\"#999\"/>\n";
    os << "<line class=\"axis\" x1=\"" << cx << "\" y1=\"" << margin << "\" x2=\"" << cx << "\" y2=\"" << size - margin
       << "\" stroke=\"#999\"/>\n";
    os << "<text x=\"" << size - margin << "\" y=\"" << cy - 6 << "\" font-size=\"12\">I</text>\n";
    os << "<text x=\"" << cx + 6 << "\" y=\"" << margin << "\" font-size=\"12\">Q</text>\n";
    for (const auto& s : noisy)
        os << "<circle class=\"sample\" cx=\"" << px(s.point.real()) << "\" cy=\"" << py(s.point.imag())
           << "\" r=\"1.5\" fill=\"" << palette[s.label % 16] << "\" fill-opacity=\"0.5\"/>\n";
    constexpr double arm = 6.0;
    for (const auto& e : report.codebook.entries) {
        const double x = px(e.symbol.real()), y = py(e.symbol.imag());
        os << "<path class=\"cross\" d=\"M" << x - arm << ',' << y << " H" << x + arm << " M" << x << ',' << y - arm
           << " V" << y + arm << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace aenoma
