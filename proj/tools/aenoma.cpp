// Command-line front end: train, eval, baseline, constellation, compare, gradcheck.
//
// Exit codes: 0 success, 2 configuration/input error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aenoma/aenoma.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#ifndef AENOMA_DATA_DIR
#define AENOMA_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace aenoma;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string default_out_dir(const std::string& fallback) {
    if (const char* env = std::getenv("AENOMA_OUT_DIR"); env && *env) return env;
    return fallback;
}

fs::path in_dir(const std::string& dir, const std::string& name) {
    const fs::path p(name);
    return p.is_absolute() ? p : fs::path(dir) / p;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    return out;
}

struct TrainArgs {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> iterations, seed, checkpoint_interval;
    std::optional<std::size_t> batch_size;
    std::optional<double> loss_weight, lr;
    std::string out_dir, model, history;
};

int run_train(const TrainArgs& a) {
    RunConfig cfg;
    if (!a.config_path.empty()) {
        cfg = load_run_config(a.config_path);
    } else if (!a.preset.empty()) {
        cfg = preset_run_config(a.preset);
    } else {
        throw ConfigError("train needs --config or --preset");
    }
    if (a.iterations) cfg.training.iterations = *a.iterations;
    if (a.seed) cfg.training.seed = *a.seed;
    if (a.batch_size) cfg.training.batch_size = *a.batch_size;
    if (a.loss_weight) cfg.training.loss_weight = *a.loss_weight;
    if (a.lr) cfg.training.adam.lr = *a.lr;
    if (a.checkpoint_interval) cfg.training.checkpoint_interval = *a.checkpoint_interval;
    cfg.output.dir = a.out_dir.empty() ? default_out_dir(cfg.output.dir) : a.out_dir;
    if (!a.model.empty()) cfg.output.model = a.model;
    if (!a.history.empty()) cfg.output.history = a.history;
    cfg.validate();

    const json expanded = to_json(cfg);
    std::cout << expanded.dump(2) << '\n';

    const fs::path model_path = in_dir(cfg.output.dir, cfg.output.model);
    const fs::path checkpoint_path = fs::path(model_path).replace_extension(".checkpoint.json");
    std::optional<fs::path> last_checkpoint;

    Trainer trainer(cfg.arch, cfg.training);
    try {
        for (std::uint64_t i = 0; i < cfg.training.iterations; ++i) {
            const auto loss = trainer.step();
            const auto done = trainer.iteration();
            if (cfg.training.checkpoint_interval > 0 && done % cfg.training.checkpoint_interval == 0 &&
                done < cfg.training.iterations) {
                const auto ck = trainer.checkpoint();
                auto out = open_out(checkpoint_path);
                out << model_to_json({cfg, ck.system, ck.adam, ck.iteration}).dump(1) << '\n';
                last_checkpoint = checkpoint_path;
                std::cerr << "iteration " << done << " loss " << loss.total << " (checkpoint " << checkpoint_path.string()
                          << ")\n";
            }
        }
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        std::cerr << "last checkpoint: " << (last_checkpoint ? last_checkpoint->string() : std::string("none")) << '\n';
        return kExitNumeric;
    }

    const auto ck = trainer.checkpoint();
    {
        auto out = open_out(model_path);
        out << model_to_json({cfg, ck.system, ck.adam, ck.iteration}).dump(1) << '\n';
    }
    {
        auto out = open_out(in_dir(cfg.output.dir, cfg.output.history));
        write_history_csv(out, ck.history, expanded);
    }
    std::cerr << "wrote " << model_path.string() << '\n';
    return kExitOk;
}

struct EvalArgs {
    std::string model;
    std::string snr_grid;
    std::optional<std::uint64_t> seed, min_errors, max_symbols;
    std::optional<double> h2;
    std::string detector = "neural";
    std::string out_dir, csv = "ber.csv", report = "ber.json";
    unsigned workers = 1;
};

EvalSettings eval_settings(const ModelFile& m, const std::string& grid, std::optional<std::uint64_t> seed,
                           std::optional<double> h2, std::optional<std::uint64_t> min_errors,
                           std::optional<std::uint64_t> max_symbols) {
    EvalSettings s;
    s.h1 = m.config.training.channel.h1;
    s.h2 = h2.value_or(m.config.eval_h2());
    s.snr_grid = parse_snr_grid(grid.empty() ? m.config.eval.snr_grid : grid);
    s.seed = seed.value_or(m.config.eval.seed);
    s.min_error_events = min_errors.value_or(m.config.eval.min_error_events);
    s.max_symbols = max_symbols.value_or(m.config.eval.max_symbols);
    return s;
}

json settings_json(const EvalSettings& s) {
    return {{"h1", s.h1},
            {"h2", s.h2},
            {"snr_grid", s.snr_grid},
            {"seed", s.seed},
            {"min_error_events", s.min_error_events},
            {"max_symbols", s.max_symbols},
            {"detector", std::string(to_string(s.detector))}};
}

int run_eval(const EvalArgs& a) {
    const ModelFile m = load_model(a.model);
    EvalSettings s = eval_settings(m, a.snr_grid, a.seed, a.h2, a.min_errors, a.max_symbols);
    if (a.detector == "ml") {
        s.detector = Detector::maximum_likelihood;
    } else if (a.detector != "neural") {
        throw ConfigError("--detector must be 'neural' or 'ml'");
    }
    s.workers = a.workers;
    const auto curve = measure_ber(m.system, s);

    json provenance = to_json(m.config);
    provenance["eval_settings"] = settings_json(s);
    const std::string dir = a.out_dir.empty() ? default_out_dir(".") : a.out_dir;
    {
        auto out = open_out(in_dir(dir, a.csv));
        write_ber_csv(out, curve, provenance);
    }
    json report{{"config", provenance}, {"points", json::array()}};
    for (const auto& p : curve) report["points"].push_back(ber_point_to_json(p));
    if (const auto gap = fairness_gap(curve, 1e-5)) report["fairness_gap_decades"] = *gap;
    {
        auto out = open_out(in_dir(dir, a.report));
        out << report.dump(2) << '\n';
    }
    for (const auto& p : curve)
        std::cout << p.snr1_db << " dB  ber1=" << p.ber1 << "  ber2=" << p.ber2 << (p.zero_errors ? "  (zero errors)" : "")
                  << '\n';
    return kExitOk;
}

struct BaselineArgs {
    std::string kind;
    double alpha = 0.7, h1 = 1.0, h2 = 2.0, power = 1.0;
    std::optional<double> snr1, h_ratio;
    std::string snr_grid = "0:20:1";
    bool allow_overlap = false;
    std::uint64_t mc_symbols = 0, seed = 1;
    std::string out_dir, csv;
};

int run_baseline(const BaselineArgs& a) {
    const std::vector<double> grid = a.snr1 ? std::vector<double>{*a.snr1} : parse_snr_grid(a.snr_grid);
    const std::string dir = a.out_dir.empty() ? default_out_dir(".") : a.out_dir;
    json provenance{{"kind", a.kind}, {"snr_grid", grid}, {"mc_symbols", a.mc_symbols}, {"seed", a.seed}};
    const bool mc = a.mc_symbols > 0;

    if (a.kind == "qpsk-noma") {
        QpskNomaConfig probe{a.alpha, a.power, a.h1, a.h2, 1.0, a.allow_overlap};
        probe.validate();
        provenance.update({{"alpha", a.alpha}, {"h1", a.h1}, {"h2", a.h2}, {"power", a.power}, {"allow_overlap", a.allow_overlap}});
        auto out = open_out(in_dir(dir, a.csv.empty() ? "baseline_qpsk_noma.csv" : a.csv));
        write_provenance(out, "baseline", provenance);
        out << "snr1_db,ber1,ber2" << (mc ? ",mc_ber1,mc_stderr1,mc_ber2,mc_stderr2" : "") << '\n';
        for (std::size_t i = 0; i < grid.size(); ++i) {
            auto c = QpskNomaConfig::at_snr1(a.alpha, a.h1, a.h2, grid[i], a.power);
            c.allow_overlap = a.allow_overlap;
            out << format_number(grid[i]) << ',' << format_number(ber_qpsk_noma_weak(c)) << ','
                << format_number(ber_qpsk_noma_strong_sic(c));
            if (mc) {
                RngStream rng(a.seed, i);
                const auto r = mc_qpsk_noma(c, a.mc_symbols, rng);
                out << ',' << format_number(r.ber1) << ',' << format_number(r.stderr1) << ',' << format_number(r.ber2)
                    << ',' << format_number(r.stderr2);
            }
            out << '\n';
        }
    } else if (a.kind == "16qam") {
        const double ratio = a.h_ratio.value_or(a.h2 / a.h1);
        require(ratio > 0.0, "--h-ratio must be positive");
        provenance["h_ratio"] = ratio;
        auto out = open_out(in_dir(dir, a.csv.empty() ? "baseline_16qam.csv" : a.csv));
        write_provenance(out, "baseline", provenance);
        out << "snr1_db,snr_symbol_db,ber" << (mc ? ",mc_ber,mc_stderr" : "") << '\n';
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double snr_symbol = snr2_from(grid[i], 1.0, ratio);
            out << format_number(grid[i]) << ',' << format_number(snr_symbol) << ',' << format_number(ber_16qam(snr_symbol));
            if (mc) {
                RngStream rng(a.seed, i);
                const auto r = mc_16qam(snr_symbol, a.mc_symbols, rng);
                out << ',' << format_number(r.ber1) << ',' << format_number(r.stderr1);
            }
            out << '\n';
            std::cout << "snr1 " << grid[i] << " dB -> symbol SNR " << snr_symbol << " dB, ber " << ber_16qam(snr_symbol)
                      << '\n';
        }
    } else {
        throw ConfigError("baseline kind must be 'qpsk-noma' or '16qam'");
    }
    return kExitOk;
}

struct ConstellationArgs {
    std::string model;
    std::size_t noisy = 0;
    double snr = 10.0;
    int user = 2;
    std::optional<double> h2;
    std::uint64_t seed = 1;
    std::string out_dir, prefix = "constellation";
};

int run_constellation(const ConstellationArgs& a) {
    const ModelFile m = load_model(a.model);
    require(a.user == 1 || a.user == 2, "--user must be 1 or 2");
    const auto report = extract_constellation(m.system.tx);
    const std::string dir = a.out_dir.empty() ? default_out_dir(".") : a.out_dir;
    json provenance = to_json(m.config);

    std::vector<NoisySample> samples;
    if (a.noisy > 0) {
        const double h1 = m.config.training.channel.h1;
        const double h2 = a.h2.value_or(m.config.eval_h2());
        const ChannelRealization ch(h1, h2, snr_to_sigma2(a.snr, h1, m.config.arch.power));
        const User user = a.user == 1 ? User::weak : User::strong;
        RngStream rng(a.seed, 0);
        for (std::size_t i = 0; i < a.noisy; ++i) {
            const auto idx = static_cast<std::size_t>(rng.below(report.codebook.size()));
            const auto& e = report.codebook.entries[idx];
            const Complex y = equalize(apply_channel(e.symbol, ch, user, rng), ch.gain(user));
            samples.push_back({y, bits_to_index(a.user == 1 ? e.pair.bits1 : e.pair.bits2)});
        }
        provenance["noisy_overlay"] = {{"samples", a.noisy}, {"snr1_db", a.snr}, {"user", a.user}, {"h2", h2}, {"seed", a.seed}};
    }

    {
        auto out = open_out(in_dir(dir, a.prefix + ".csv"));
        write_constellation_csv(out, report, provenance);
    }
    {
        auto out = open_out(in_dir(dir, a.prefix + ".json"));
        json j = constellation_to_json(report);
        j["config"] = provenance;
        out << j.dump(2) << '\n';
    }
    {
        auto out = open_out(in_dir(dir, a.prefix + ".svg"));
        out << render_constellation_svg(report, samples, "AE-NOMA super-constellation (user " + std::to_string(a.user) + ")");
    }
    std::cout << report.codebook.size() << " points, mean power " << report.mean_power << ", min distance "
              << report.min_pairwise_distance << '\n';
    return kExitOk;
}

struct CompareArgs {
    std::string model;
    std::string reference = std::string(AENOMA_DATA_DIR) + "/literature_ber.json";
    std::string snr_grid = "7.5,10,14,16,18";
    double alpha = 0.7;
    std::optional<std::uint64_t> seed, max_symbols;
    std::string out_dir, csv = "comparison.csv";
};

int run_compare(const CompareArgs& a) {
    const ModelFile m = load_model(a.model);
    CompareSettings cs;
    cs.eval = eval_settings(m, a.snr_grid, a.seed, std::nullopt, std::nullopt, a.max_symbols);
    cs.alpha = a.alpha;
    cs.literature = load_literature(a.reference);
    const auto table = compare_with_baselines(m.system, cs);
    json provenance = to_json(m.config);
    provenance["eval_settings"] = settings_json(cs.eval);
    provenance["alpha"] = cs.alpha;
    provenance["reference"] = a.reference;
    const std::string dir = a.out_dir.empty() ? default_out_dir(".") : a.out_dir;
    auto out = open_out(in_dir(dir, a.csv));
    write_comparison_csv(out, table, provenance);
    for (const auto& r : table.rows)
        std::cout << r.method << " @ " << r.snr1_db << " dB: " << r.worse_ber << " [" << to_string(r.source) << "]\n";
    return kExitOk;
}

int run_gradcheck(std::uint64_t seed, bool corrupt) {
    std::function<void(Vector&)> tamper;
    if (corrupt) tamper = [](Vector& g) { g *= 1.01; };
    const auto report = gradient_self_check(seed, 4, 3e-5, tamper);
    const bool pass = report.result.max_relative_error < 1e-4;
    std::cout << "gradcheck seed=" << seed << " parameters=" << report.parameter_count
              << " max_relative_error=" << report.result.max_relative_error
              << " worst_index=" << report.result.worst_index << " -> " << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? kExitOk : 1;
}

} // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Batch-sized temporaries stay on the heap instead of a fresh mmap per step.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
    CLI::App app{"AE-NOMA super-constellation training and evaluation"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a system and write a model file plus loss history");
    t->add_option("--config", train.config_path, "JSON run config");
    t->add_option("--preset", train.preset, "case1 | case2 | case3");
    t->add_option("--iterations", train.iterations);
    t->add_option("--seed", train.seed);
    t->add_option("--batch-size", train.batch_size);
    t->add_option("--loss-weight", train.loss_weight);
    t->add_option("--lr", train.lr);
    t->add_option("--checkpoint-interval", train.checkpoint_interval);
    t->add_option("--out-dir", train.out_dir, "output directory (default $AENOMA_OUT_DIR or config)");
    t->add_option("--model", train.model, "model file name");
    t->add_option("--history", train.history, "loss history CSV name");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Monte-Carlo BER sweep of a trained model");
    e->add_option("model", ev.model)->required();
    e->add_option("--snr-grid", ev.snr_grid, "start:stop:step or comma list (dB)");
    e->add_option("--seed", ev.seed);
    e->add_option("--h2", ev.h2);
    e->add_option("--min-errors", ev.min_errors);
    e->add_option("--max-symbols", ev.max_symbols);
    e->add_option("--detector", ev.detector, "neural | ml");
    e->add_option("--workers", ev.workers);
    e->add_option("--out-dir", ev.out_dir);
    e->add_option("--csv", ev.csv);
    e->add_option("--report", ev.report);

    BaselineArgs bl;
    auto* b = app.add_subcommand("baseline", "closed-form (and optional Monte-Carlo) baseline BER");
    b->add_option("kind", bl.kind, "qpsk-noma | 16qam")->required();
    b->add_option("--alpha", bl.alpha);
    b->add_option("--h1", bl.h1);
    b->add_option("--h2", bl.h2);
    b->add_option("--power", bl.power);
    b->add_option("--snr1", bl.snr1, "single weak-user SNR (dB)");
    b->add_option("--h-ratio", bl.h_ratio, "h2/h1 used to move 16-QAM to the strong user's SNR");
    b->add_option("--snr-grid", bl.snr_grid);
    b->add_flag("--allow-overlap", bl.allow_overlap, "permit alpha <= 0.5");
    b->add_option("--mc", bl.mc_symbols, "Monte-Carlo symbols per point (0 = closed form only)");
    b->add_option("--seed", bl.seed);
    b->add_option("--out-dir", bl.out_dir);
    b->add_option("--csv", bl.csv);

    ConstellationArgs co;
    auto* c = app.add_subcommand("constellation", "export the learned codebook as CSV, JSON and SVG");
    c->add_option("model", co.model)->required();
    c->add_option("--noisy", co.noisy, "number of received samples to overlay");
    c->add_option("--snr", co.snr, "weak-user SNR for the overlay (dB)");
    c->add_option("--user", co.user, "receiver whose view is overlaid (1 or 2)");
    c->add_option("--h2", co.h2);
    c->add_option("--seed", co.seed);
    c->add_option("--out-dir", co.out_dir);
    c->add_option("--prefix", co.prefix);

    CompareArgs cmp;
    auto* k = app.add_subcommand("compare", "worse-user BER table against baselines and published values");
    k->add_option("model", cmp.model)->required();
    k->add_option("--reference", cmp.reference, "literature reference JSON");
    k->add_option("--snr-grid", cmp.snr_grid);
    k->add_option("--alpha", cmp.alpha);
    k->add_option("--seed", cmp.seed);
    k->add_option("--max-symbols", cmp.max_symbols);
    k->add_option("--out-dir", cmp.out_dir);
    k->add_option("--csv", cmp.csv);

    std::uint64_t gc_seed = 1;
    bool gc_corrupt = false;
    auto* g = app.add_subcommand("gradcheck", "finite-difference check of the full system gradient");
    g->add_option("--seed", gc_seed);
    g->add_flag("--corrupt-backprop", gc_corrupt, "scale the analytic gradient by 1.01 (sentinel)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*t) return run_train(train);
        if (*e) return run_eval(ev);
        if (*b) return run_baseline(bl);
        if (*c) return run_constellation(co);
        if (*k) return run_compare(cmp);
        if (*g) return run_gradcheck(gc_seed, gc_corrupt);
    } catch (const NumericError& err) {
        std::cerr << "numeric error: " << err.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
