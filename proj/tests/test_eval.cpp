#include <cmath>

#include <gtest/gtest.h>

#include "aenoma/eval.hpp"
#include "aenoma/training.hpp"

using namespace aenoma;

namespace {

// A briefly trained first-test-case system shared by the tests below.
const AeNomaSystem& trained() {
    static const AeNomaSystem sys = [] {
        TrainingConfig c = experiment_preset("case1").training;
        c.iterations = 1500;
        c.batch_size = 256;
        c.seed = 5;
        return train(Architecture{}, c).system;
    }();
    return sys;
}

EvalSettings quick(const std::string& grid, std::uint64_t max_symbols = 20000) {
    EvalSettings s;
    s.snr_grid = parse_snr_grid(grid);
    s.max_symbols = max_symbols;
    s.min_error_events = 1'000'000; // run to max_symbols
    return s;
}

BerPoint point(double ber1, double ber2) {
    BerPoint p;
    p.ber1 = ber1;
    p.ber2 = ber2;
    return p;
}

} // namespace

TEST(SnrGrid, Parsing) {
    EXPECT_EQ(parse_snr_grid("0:20:1").size(), 21u);
    EXPECT_EQ(parse_snr_grid("0:20:1").back(), 20.0);
    EXPECT_EQ(parse_snr_grid("0:1:0.25").size(), 5u);
    EXPECT_EQ(parse_snr_grid("7.5,10,14"), (std::vector<double>{7.5, 10, 14}));
    EXPECT_THROW(parse_snr_grid("0:20"), ConfigError);
    EXPECT_THROW(parse_snr_grid("0:20:0"), ConfigError);
    EXPECT_THROW(parse_snr_grid("a,b"), ConfigError);
    EXPECT_THROW(parse_snr_grid(""), ConfigError);
}

TEST(MeasureBer, NoiselessTrainedModelMakesNoErrors) {
    const auto book = build_codebook(trained().tx);
    const auto report = constellation_report(book);
    ASSERT_GT(report.min_pairwise_distance, 1e-3);
    for (auto det : {Detector::neural, Detector::maximum_likelihood}) {
        auto s = quick("200", 20000);
        s.detector = det;
        const auto curve = measure_ber(trained(), s);
        EXPECT_EQ(curve[0].ber1, 0.0) << to_string(det);
        EXPECT_EQ(curve[0].ber2, 0.0) << to_string(det);
        EXPECT_TRUE(curve[0].zero_errors);
    }
}

TEST(MeasureBer, SameSeedReproducesAndWorkersDoNotMatter) {
    auto s = quick("0:10:5", 8192);
    const auto a = measure_ber(trained(), s);
    const auto b = measure_ber(trained(), s);
    s.workers = 3;
    const auto c = measure_ber(trained(), s);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].ber1, b[i].ber1);
        EXPECT_EQ(a[i].ber2, b[i].ber2);
        EXPECT_EQ(a[i].ber1, c[i].ber1);
        EXPECT_EQ(a[i].ber2, c[i].ber2);
    }
}

TEST(MeasureBer, CountsAndStandardErrors) {
    const auto curve = measure_ber(trained(), quick("0", 10000));
    const auto& p = curve[0];
    EXPECT_EQ(p.n_symbols, 10000u);
    EXPECT_EQ(p.n_bits, 20000u);
    EXPECT_DOUBLE_EQ(p.ber1, static_cast<double>(p.n_error_events1) / 20000.0);
    EXPECT_NEAR(p.stderr1, std::sqrt(p.ber1 * (1 - p.ber1) / 20000.0), 1e-15);
    EXPECT_GT(p.ber1, 0.0);
}

TEST(MeasureBer, StopsOnceBothUsersHaveEnoughErrors) {
    EvalSettings s;
    s.snr_grid = {0.0};
    s.min_error_events = 50;
    s.chunk_symbols = 256;
    const auto p = measure_ber(trained(), s)[0];
    EXPECT_GE(p.n_error_events1, 50u);
    EXPECT_GE(p.n_error_events2, 50u);
    EXPECT_LT(p.n_symbols, 100000u);
    EXPECT_EQ(p.n_symbols % 256, 0u);
}

TEST(MeasureBer, HigherSnrDoesNotHurt) {
    const auto curve = measure_ber(trained(), quick("0:12:4", 40000));
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double se = std::hypot(curve[i].stderr1, curve[i - 1].stderr1);
        EXPECT_LE(curve[i].ber1, curve[i - 1].ber1 + 3 * se);
    }
}

TEST(FairnessGap, Examples) {
    EXPECT_EQ(*fairness_gap({point(1e-2, 1e-2), point(1e-3, 1e-3)}, 1e-5), 0.0);
    EXPECT_NEAR(*fairness_gap({point(1e-2, 1e-3), point(1e-2, 1e-2)}, 1e-5), 1.0, 1e-12);
    EXPECT_NEAR(*fairness_gap({point(1e-2, 1e-3), point(1e-6, 1e-2)}, 1e-5), 1.0, 1e-12);
    EXPECT_FALSE(fairness_gap({point(0, 1e-2), point(1e-7, 1e-7)}, 1e-5).has_value());
    EXPECT_THROW(fairness_gap({}, 0.0), ConfigError);
}

TEST(Constellation, ReferenceSixteenQamReport) {
    const auto r = constellation_report(gray_16qam_codebook());
    EXPECT_NEAR(r.min_pairwise_distance, 2.0 / std::sqrt(10.0), 1e-12);
    EXPECT_NEAR(r.mean_power, 1.0, 1e-12);
    ASSERT_EQ(r.user1_groups.size(), 4u);
    for (const auto& g : r.user1_groups) EXPECT_EQ(g.members.size(), 4u);
}

TEST(Constellation, TrainedReportIsUnitPower) {
    const auto r = extract_constellation(trained().tx);
    EXPECT_EQ(r.codebook.size(), 16u);
    EXPECT_NEAR(r.mean_power, 1.0, 1e-9);
}

TEST(Svg, CrossesSamplesAndDeterminism) {
    const auto r = constellation_report(gray_16qam_codebook());
    const std::string svg = render_constellation_svg(r);
    const auto count = [](const std::string& s, const std::string& needle) {
        std::size_t n = 0;
        for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
        return n;
    };
    EXPECT_EQ(count(svg, "class=\"cross\""), 16u);
    EXPECT_EQ(count(svg, "class=\"sample\""), 0u);
    EXPECT_EQ(svg, render_constellation_svg(r));
    const std::vector<NoisySample> noisy{{{0.1, 0.2}, 1}, {{-0.5, 0.3}, 2}};
    EXPECT_EQ(count(render_constellation_svg(r, noisy), "class=\"sample\""), 2u);
    EXPECT_NE(render_constellation_svg(r, {}, "a < b").find("a &lt; b"), std::string::npos);
}

TEST(Compare, TableCarriesAllRowKinds) {
    CompareSettings cs;
    cs.eval = quick("14,16", 4096);
    cs.literature = {{"ninkovic2023weighted", 16.0, 2e-2}, {"alberge2018constellation", 14.0, 8e-2}};
    const auto t = compare_with_baselines(trained(), cs);
    bool lit16 = false, qpsk = false, qam = false, measured = false;
    for (const auto& r : t.rows) {
        if (r.method == "ninkovic2023weighted" && r.snr1_db == 16.0) {
            lit16 = true;
            EXPECT_EQ(r.worse_ber, 2e-2);
            EXPECT_EQ(r.source, RowSource::literature_constant);
        }
        if (r.method == "QPSK-NOMA (alpha=0.7)" && r.snr1_db == 14.0) {
            qpsk = true;
            const auto q = QpskNomaConfig::at_snr1(0.7, 1.0, 2.0, 14.0);
            EXPECT_EQ(r.worse_ber, std::max(ber_qpsk_noma_weak(q), ber_qpsk_noma_strong_sic(q)));
            EXPECT_EQ(r.source, RowSource::closed_form);
        }
        if (r.method == "16-QAM (strong-user SNR)" && r.snr1_db == 16.0) {
            qam = true;
            EXPECT_NEAR(r.worse_ber / ber_16qam(snr2_from(16.0, 1.0, 2.0)), 1.0, 1e-12);
        }
        measured |= r.source == RowSource::measured && r.method == "AE-NOMA";
        EXPECT_FALSE(to_string(r.source).empty());
    }
    EXPECT_TRUE(lit16);
    EXPECT_TRUE(qpsk);
    EXPECT_TRUE(qam);
    EXPECT_TRUE(measured);
}
