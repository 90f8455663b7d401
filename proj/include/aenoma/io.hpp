#pragma once

// Run configuration schema, model files and the CSV/JSON report formats.
//
// Config and model files are JSON. Doubles are written in shortest round-trip
// form, so a saved model reloads bit-for-bit.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ae_model.hpp"
#include "eval.hpp"
#include "training.hpp"

namespace aenoma {

using nlohmann::json;

inline constexpr int kModelSchemaVersion = 1;

struct EvalSection {
    std::optional<double> h2; // defaults to the preset's test gain, else the channel's fixed/mid value
    std::string snr_grid = "0:20:1";
    std::uint64_t min_error_events = 100;
    std::uint64_t max_symbols = 10'000'000;
    std::uint64_t seed = 1;

    bool operator==(const EvalSection&) const = default;
};

struct OutputSection {
    std::string dir = ".";
    std::string model = "model.json";
    std::string history = "history.csv";

    bool operator==(const OutputSection&) const = default;
};

/// Fully expanded experiment description.
struct RunConfig {
    std::string preset; // empty when built from explicit fields only
    Architecture arch;
    TrainingConfig training;
    EvalSection eval;
    OutputSection output;

    double eval_h2() const {
        if (eval.h2) return *eval.h2;
        return training.channel.kind == ChannelDistribution::Kind::fixed ? training.channel.h2
                                                                         : 0.5 * (training.channel.h2_min + training.channel.h2_max);
    }

    void validate() const {
        arch.validate();
        training.validate();
        require(eval_h2() >= training.channel.h1, "evaluation h2 must be at least h1");
        parse_snr_grid(eval.snr_grid);
    }

    bool operator==(const RunConfig&) const = default;
};

inline RunConfig preset_run_config(const std::string& name) {
    const auto p = experiment_preset(name);
    RunConfig c;
    c.preset = name;
    c.training = p.training;
    c.eval.h2 = p.eval_h2;
    return c;
}

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [k, _] : j.items())
        if (!keys.contains(k)) throw ConfigError("unknown config key '" + where + "." + k + "'");
}

template <typename T>
void read_if(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
    }
}

} // namespace detail

inline json to_json(const ChannelDistribution& d) {
    json j{{"kind", d.kind == ChannelDistribution::Kind::fixed ? "fixed" : "uniform"}, {"h1", d.h1}};
    if (d.kind == ChannelDistribution::Kind::fixed) {
        j["h2"] = d.h2;
    } else {
        j["h2_min"] = d.h2_min;
        j["h2_max"] = d.h2_max;
    }
    return j;
}

inline json to_json(const RunConfig& c) {
    json j;
    j["preset"] = c.preset;
    j["architecture"] = {{"k1", c.arch.k1},
                         {"k2", c.arch.k2},
                         {"hidden_width", c.arch.hidden_width},
                         {"hidden_layers", c.arch.hidden_layers},
                         {"sub_hidden_width", c.arch.sub_hidden_width},
                         {"sub_hidden_layers", c.arch.sub_hidden_layers},
                         {"append_gain", c.arch.append_gain},
                         {"power", c.arch.power}};
    const auto& t = c.training;
    j["training"] = {{"batch_size", t.batch_size},
                     {"iterations", t.iterations},
                     {"loss_weight", t.loss_weight},
                     {"snr1_train_db", t.snr1_train_db},
                     {"seed", t.seed},
                     {"normalization", std::string(to_string(t.normalization))},
                     {"history_stride", t.history_stride},
                     {"checkpoint_interval", t.checkpoint_interval},
                     {"adam", {{"lr", t.adam.lr}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"epsilon", t.adam.epsilon}}}};
    j["channel"] = to_json(t.channel);
    j["eval"] = {{"h2", c.eval_h2()},
                 {"snr_grid", c.eval.snr_grid},
                 {"min_error_events", c.eval.min_error_events},
                 {"max_symbols", c.eval.max_symbols},
                 {"seed", c.eval.seed}};
    j["output"] = {{"dir", c.output.dir}, {"model", c.output.model}, {"history", c.output.history}};
    return j;
}

/// Expands "preset" (if any) and applies every explicit field on top. Unknown keys are errors.
inline RunConfig run_config_from_json(const json& j) {
    using detail::read_if;
    detail::reject_unknown(j, {"preset", "architecture", "training", "channel", "eval", "output"}, "config");
    RunConfig c;
    if (j.contains("preset") && !j.at("preset").is_null()) {
        std::string name;
        read_if(j, "preset", name, "config");
        if (!name.empty()) c = preset_run_config(name);
    }
    if (j.contains("architecture")) {
        const auto& a = j.at("architecture");
        detail::reject_unknown(a, {"k1", "k2", "hidden_width", "hidden_layers", "sub_hidden_width", "sub_hidden_layers",
                                   "append_gain", "power"},
                               "architecture");
        read_if(a, "k1", c.arch.k1, "architecture");
        read_if(a, "k2", c.arch.k2, "architecture");
        read_if(a, "hidden_width", c.arch.hidden_width, "architecture");
        read_if(a, "hidden_layers", c.arch.hidden_layers, "architecture");
        read_if(a, "sub_hidden_width", c.arch.sub_hidden_width, "architecture");
        read_if(a, "sub_hidden_layers", c.arch.sub_hidden_layers, "architecture");
        read_if(a, "append_gain", c.arch.append_gain, "architecture");
        read_if(a, "power", c.arch.power, "architecture");
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        detail::reject_unknown(t, {"batch_size", "iterations", "loss_weight", "snr1_train_db", "seed", "normalization",
                                   "history_stride", "checkpoint_interval", "adam"},
                               "training");
        auto& tc = c.training;
        read_if(t, "batch_size", tc.batch_size, "training");
        read_if(t, "iterations", tc.iterations, "training");
        read_if(t, "loss_weight", tc.loss_weight, "training");
        read_if(t, "snr1_train_db", tc.snr1_train_db, "training");
        read_if(t, "seed", tc.seed, "training");
        read_if(t, "history_stride", tc.history_stride, "training");
        read_if(t, "checkpoint_interval", tc.checkpoint_interval, "training");
        if (t.contains("normalization")) {
            std::string mode;
            read_if(t, "normalization", mode, "training");
            tc.normalization = normalization_from_string(mode);
        }
        if (t.contains("adam")) {
            const auto& ad = t.at("adam");
            detail::reject_unknown(ad, {"lr", "beta1", "beta2", "epsilon"}, "training.adam");
            read_if(ad, "lr", tc.adam.lr, "training.adam");
            read_if(ad, "beta1", tc.adam.beta1, "training.adam");
            read_if(ad, "beta2", tc.adam.beta2, "training.adam");
            read_if(ad, "epsilon", tc.adam.epsilon, "training.adam");
        }
    }
    if (j.contains("channel")) {
        const auto& ch = j.at("channel");
        detail::reject_unknown(ch, {"kind", "h1", "h2", "h2_min", "h2_max"}, "channel");
        auto& d = c.training.channel;
        std::string kind = d.kind == ChannelDistribution::Kind::fixed ? "fixed" : "uniform";
        read_if(ch, "kind", kind, "channel");
        double h1 = d.h1, h2 = d.h2, lo = d.h2_min, hi = d.h2_max;
        read_if(ch, "h1", h1, "channel");
        read_if(ch, "h2", h2, "channel");
        read_if(ch, "h2_min", lo, "channel");
        read_if(ch, "h2_max", hi, "channel");
        if (kind == "fixed") {
            d = ChannelDistribution::fixed(h1, h2);
        } else if (kind == "uniform") {
            d = ChannelDistribution::uniform(h1, lo, hi);
        } else {
            throw ConfigError("channel.kind must be 'fixed' or 'uniform'");
        }
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::reject_unknown(e, {"h2", "snr_grid", "min_error_events", "max_symbols", "seed"}, "eval");
        if (e.contains("h2") && !e.at("h2").is_null()) {
            double h2 = 0.0;
            read_if(e, "h2", h2, "eval");
            c.eval.h2 = h2;
        }
        read_if(e, "snr_grid", c.eval.snr_grid, "eval");
        read_if(e, "min_error_events", c.eval.min_error_events, "eval");
        read_if(e, "max_symbols", c.eval.max_symbols, "eval");
        read_if(e, "seed", c.eval.seed, "eval");
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        detail::reject_unknown(o, {"dir", "model", "history"}, "output");
        read_if(o, "dir", c.output.dir, "output");
        read_if(o, "model", c.output.model, "output");
        read_if(o, "history", c.output.history, "output");
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

// ---- model files ----

inline json mlp_to_json(const Mlp& mlp) {
    json j;
    const auto& spec = mlp.spec();
    j["layer_dims"] = spec.layer_dims;
    json acts = json::array();
    for (auto a : spec.activations) acts.push_back(std::string(to_string(a)));
    j["activations"] = acts;
    json flags = json::array();
    for (bool b : spec.residual_flags) flags.push_back(b);
    j["residual_flags"] = flags;
    json layers = json::array();
    for (const auto& l : mlp.layers()) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row.push_back(l.weights(r, c));
            rows.push_back(row);
        }
        layers.push_back({{"weights", rows}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    j["layers"] = layers;
    return j;
}

inline Mlp mlp_from_json(const json& j, const MlpSpec& expected, const std::string& name) {
    try {
        MlpSpec spec;
        spec.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
        for (const auto& a : j.at("activations")) spec.activations.push_back(activation_from_string(a.get<std::string>()));
        for (const auto& b : j.at("residual_flags")) spec.residual_flags.push_back(b.get<bool>());
        spec.validate();
        if (!(spec == expected)) throw ConfigError("network '" + name + "' does not match the configured architecture");
        std::vector<DenseLayer> layers;
        const auto& lj = j.at("layers");
        if (lj.size() != spec.num_layers()) throw ConfigError("network '" + name + "' has the wrong layer count");
        for (std::size_t i = 0; i < spec.num_layers(); ++i) {
            const auto in = static_cast<Eigen::Index>(spec.layer_dims[i]);
            const auto out = static_cast<Eigen::Index>(spec.layer_dims[i + 1]);
            DenseLayer layer{Matrix(out, in), Vector(out), spec.activations[i]};
            const auto& rows = lj[i].at("weights");
            const auto& bias = lj[i].at("bias");
            if (rows.size() != static_cast<std::size_t>(out) || bias.size() != static_cast<std::size_t>(out))
                throw ConfigError("network '" + name + "' layer " + std::to_string(i) + " has the wrong shape");
            for (Eigen::Index r = 0; r < out; ++r) {
                const auto& row = rows[static_cast<std::size_t>(r)];
                if (row.size() != static_cast<std::size_t>(in))
                    throw ConfigError("network '" + name + "' layer " + std::to_string(i) + " has the wrong shape");
                for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = row[static_cast<std::size_t>(c)].get<double>();
                layer.bias[r] = bias[static_cast<std::size_t>(r)].get<double>();
            }
            layers.push_back(std::move(layer));
        }
        return Mlp(spec, std::move(layers));
    } catch (const json::exception& e) {
        throw ConfigError("network '" + name + "' is malformed: " + e.what());
    }
}

struct ModelFile {
    RunConfig config;
    AeNomaSystem system;
    AdamState adam;
    std::uint64_t iteration = 0;
};

inline json model_to_json(const ModelFile& m) {
    json j;
    j["schema"] = "aenoma-model";
    j["schema_version"] = kModelSchemaVersion;
    j["config"] = to_json(m.config);
    j["seed"] = m.config.training.seed;
    j["iteration"] = m.iteration;
    j["networks"] = {{"tx_main", mlp_to_json(m.system.tx.main_block)},
                     {"tx_sub", mlp_to_json(m.system.tx.sub_network)},
                     {"rx1", mlp_to_json(m.system.rx1.main_block)},
                     {"rx2", mlp_to_json(m.system.rx2.main_block)}};
    const auto& a = m.adam;
    j["optimizer"] = {{"step", a.step},
                      {"first_moment", std::vector<double>(a.first_moment.data(), a.first_moment.data() + a.first_moment.size())},
                      {"second_moment", std::vector<double>(a.second_moment.data(), a.second_moment.data() + a.second_moment.size())}};
    return j;
}

inline ModelFile model_from_json(const json& j) {
    try {
        if (j.value("schema", std::string{}) != "aenoma-model") throw ConfigError("not an aenoma model file");
        const int version = j.at("schema_version").get<int>();
        if (version != kModelSchemaVersion)
            throw ConfigError("unsupported model schema version " + std::to_string(version));
        ModelFile m;
        m.config = run_config_from_json(j.at("config"));
        m.iteration = j.at("iteration").get<std::uint64_t>();
        const auto& arch = m.config.arch;
        auto& s = m.system;
        s.arch = arch;
        const auto& nets = j.at("networks");
        s.tx.main_block = mlp_from_json(nets.at("tx_main"), tx_main_spec(arch), "tx_main");
        s.tx.sub_network = mlp_from_json(nets.at("tx_sub"), tx_sub_spec(arch), "tx_sub");
        s.tx.power = arch.power;
        s.tx.k1 = arch.k1;
        s.tx.k2 = arch.k2;
        s.tx.normalization = Normalization::codebook;
        s.rx1 = {User::weak, mlp_from_json(nets.at("rx1"), rx_spec(arch, User::weak), "rx1"), arch.append_gain};
        s.rx2 = {User::strong, mlp_from_json(nets.at("rx2"), rx_spec(arch, User::strong), "rx2"), arch.append_gain};
        m.adam = AdamState(s.parameter_count(), m.config.training.adam);
        const auto& opt = j.at("optimizer");
        m.adam.step = opt.at("step").get<std::uint64_t>();
        const auto m1 = opt.at("first_moment").get<std::vector<double>>();
        const auto m2 = opt.at("second_moment").get<std::vector<double>>();
        if (m1.size() != s.parameter_count() || m2.size() != s.parameter_count())
            throw ConfigError("optimizer state has the wrong length");
        m.adam.first_moment = Eigen::Map<const Vector>(m1.data(), static_cast<Eigen::Index>(m1.size()));
        m.adam.second_moment = Eigen::Map<const Vector>(m2.data(), static_cast<Eigen::Index>(m2.size()));
        return m;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(const ModelFile& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write model file '" + path + "'");
    out << model_to_json(m).dump(1) << '\n';
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open model file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("model file '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

// ---- CSV / JSON reports ----

/// '#'-prefixed provenance lines: the producing command and the compact config.
inline void write_provenance(std::ostream& os, const std::string& command, const json& config) {
    os << "# aenoma " << command << '\n';
    os << "# config: " << config.dump() << '\n';
}

inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

inline void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history, const json& config) {
    write_provenance(os, "train", config);
    os << "iteration,loss1,loss2,w1,w2,total\n";
    for (const auto& h : history)
        os << h.iteration << ',' << format_number(h.loss.loss1) << ',' << format_number(h.loss.loss2) << ','
           << format_number(h.loss.w1) << ',' << format_number(h.loss.w2) << ',' << format_number(h.loss.total) << '\n';
}

inline constexpr const char* kBerCsvHeader = "snr1_db,ber1,stderr1,ber2,stderr2,n_bits";

inline void write_ber_csv(std::ostream& os, const std::vector<BerPoint>& curve, const json& config) {
    write_provenance(os, "eval", config);
    os << kBerCsvHeader << '\n';
    for (const auto& p : curve)
        os << format_number(p.snr1_db) << ',' << format_number(p.ber1) << ',' << format_number(p.stderr1) << ','
           << format_number(p.ber2) << ',' << format_number(p.stderr2) << ',' << p.n_bits << '\n';
}

inline json ber_point_to_json(const BerPoint& p) {
    return {{"snr1_db", p.snr1_db},       {"ber1", p.ber1},
            {"stderr1", p.stderr1},       {"ber2", p.ber2},
            {"stderr2", p.stderr2},       {"n_bits", p.n_bits},
            {"n_bits2", p.n_bits2},       {"n_symbols", p.n_symbols},
            {"n_error_events1", p.n_error_events1}, {"n_error_events2", p.n_error_events2},
            {"zero_errors", p.zero_errors}};
}

inline void write_constellation_csv(std::ostream& os, const ConstellationReport& r, const json& config) {
    write_provenance(os, "constellation", config);
    os << "bits1,bits2,i,q\n";
    const auto bitstr = [](const Bits& b) {
        std::string s;
        for (auto v : b) s += v ? '1' : '0';
        return s;
    };
    for (const auto& e : r.codebook.entries)
        os << bitstr(e.pair.bits1) << ',' << bitstr(e.pair.bits2) << ',' << format_number(e.symbol.real()) << ','
           << format_number(e.symbol.imag()) << '\n';
    os << "# mean_power," << std::fixed << std::setprecision(6) << r.mean_power << '\n';
}

inline json constellation_to_json(const ConstellationReport& r) {
    json groups_json = json::object();
    const auto groups = [](const std::vector<ClusterGroup>& gs) {
        json arr = json::array();
        for (const auto& g : gs) {
            std::string bits;
            for (auto v : g.bits) bits += v ? '1' : '0';
            arr.push_back({{"bits", bits},
                           {"members", g.members},
                           {"centroid", {g.centroid.real(), g.centroid.imag()}},
                           {"spread", g.spread}});
        }
        return arr;
    };
    json points = json::array();
    for (const auto& e : r.codebook.entries) points.push_back({e.symbol.real(), e.symbol.imag()});
    return {{"points", points},
            {"mean_power", r.mean_power},
            {"min_pairwise_distance", r.min_pairwise_distance},
            {"user1_groups", groups(r.user1_groups)},
            {"user2_groups", groups(r.user2_groups)}};
}

inline void write_comparison_csv(std::ostream& os, const ComparisonTable& t, const json& config) {
    write_provenance(os, "compare", config);
    os << "method,snr1_db,worse_ber,source\n";
    for (const auto& r : t.rows)
        os << '"' << r.method << "\"," << format_number(r.snr1_db) << ',' << format_number(r.worse_ber) << ','
           << to_string(r.source) << '\n';
}

inline std::vector<LiteratureRow> load_literature(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open reference data '" + path + "'");
    try {
        json j;
        in >> j;
        std::vector<LiteratureRow> rows;
        for (const auto& r : j.at("rows"))
            rows.push_back({r.at("method").get<std::string>(), r.at("snr1_db").get<double>(), r.at("worse_ber").get<double>()});
        return rows;
    } catch (const json::exception& e) {
        throw ConfigError("reference data '" + path + "' is malformed: " + e.what());
    }
}

} // namespace aenoma
