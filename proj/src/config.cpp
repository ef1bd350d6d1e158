#include "pafm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pafm/errors.hpp"

namespace pafm::config {

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::NoFrm: return "no_frm";
        case Ablation::NoTd: return "no_td";
        case Ablation::NoTdTpb: return "no_td_tpb";
    }
    return "full";
}

Ablation parse_ablation(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "no_frm") return Ablation::NoFrm;
    if (s == "no_td") return Ablation::NoTd;
    if (s == "no_td_tpb") return Ablation::NoTdTpb;
    throw ConfigError("unknown ablation '" + s + "' (expected full, no_frm, no_td, no_td_tpb)");
}

namespace {

std::string gate_norm_name(moe::GateNormalization n) {
    return n == moe::GateNormalization::Selected ? "selected" : "full";
}

moe::GateNormalization parse_gate_norm(const std::string& s) {
    if (s == "selected") return moe::GateNormalization::Selected;
    if (s == "full") return moe::GateNormalization::Full;
    throw ConfigError("unknown gate_normalization '" + s + "' (expected selected or full)");
}

// Reads the fields of one JSON object section, rejecting unknown keys.
class Section {
public:
    Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    const Json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
        }
    }

private:
    const Json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace

void TrainConfig::validate() const {
    if (!(lr_init > 0.0)) throw ConfigError("train.lr_init must be > 0");
    if (total_iters < 1) throw ConfigError("train.total_iters must be >= 1");
    if (warmup_iters < 0 || warmup_iters >= total_iters) {
        throw ConfigError("train.warmup_iters must be in [0, total_iters)");
    }
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(sigma >= 0.0)) throw ConfigError("train.sigma must be >= 0");
}

void SamplerConfig::validate() const {
    if (n_steps < 1) throw ConfigError("sampler.n_steps must be >= 1");
    if (!(sigma >= 0.0)) throw ConfigError("sampler.sigma must be >= 0");
    if (!(guidance_weight >= 0.0)) throw ConfigError("sampler.guidance_weight must be >= 0");
    if (batch_size < 1) throw ConfigError("sampler.batch_size must be >= 1");
}

void EvalConfig::validate() const {
    if (n_runs < 1) throw ConfigError("eval.n_runs must be >= 1");
    if (max_steps < 1 || encoder_steps < 1) throw ConfigError("eval step counts must be >= 1");
}

void ExperimentConfig::validate() const {
    if (data.source.empty()) throw ConfigError("data.source is empty (use 'sines' or a CSV path)");
    if (data.window_len < 2) throw ConfigError("data.window_len must be >= 2");
    if (data.stride < 1) throw ConfigError("data.stride must be >= 1");
    if (data.is_sines() && (data.n_samples < 1 || data.n_features < 1)) {
        throw ConfigError("data.n_samples and data.n_features must be >= 1 for sines");
    }
    if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) throw ConfigError("data.test_fraction must be in (0, 1)");
    if (net.n_heads < 1 || net.head_dim < 1) throw ConfigError("net.n_heads and net.head_dim must be >= 1");
    if (net.enc_layers < 1 || net.dec_layers < 1) throw ConfigError("net layer counts must be >= 1");
    if (net.conv_kernel < 1 || net.conv_kernel % 2 == 0) throw ConfigError("net.conv_kernel must be odd");
    if (net.n_experts < 1 || net.top_k < 1 || net.top_k > net.n_experts) {
        throw ConfigError("net.top_k must be in [1, net.n_experts]");
    }
    if (preset_scale != "paper" && preset_scale != "desk") throw ConfigError("preset_scale must be paper or desk");
    train.validate();
    sampler.validate();
    eval.validate();
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
    data.split_seed = seed;
    train.seed = seed;
    sampler.seed = seed;
    eval.seed = seed;
}

Json to_json(const ExperimentConfig& c) {
    Json j;
    j["preset"] = c.preset;
    j["preset_scale"] = c.preset_scale;
    j["data"] = {{"source", c.data.source},
                 {"window_len", c.data.window_len},
                 {"stride", c.data.stride},
                 {"n_samples", c.data.n_samples},
                 {"n_features", c.data.n_features},
                 {"has_header", c.data.has_header},
                 {"drop_non_numeric_columns", c.data.drop_non_numeric_columns},
                 {"split_seed", c.data.split_seed},
                 {"test_fraction", c.data.test_fraction}};
    j["net"] = {{"n_heads", c.net.n_heads},
                {"head_dim", c.net.head_dim},
                {"enc_layers", c.net.enc_layers},
                {"dec_layers", c.net.dec_layers},
                {"conv_kernel", c.net.conv_kernel},
                {"n_experts", c.net.n_experts},
                {"top_k", c.net.top_k},
                {"gate_normalization", gate_norm_name(c.net.gate_normalization)},
                {"untied_paths", c.net.untied_paths}};
    j["train"] = {{"lr_init", c.train.lr_init},
                  {"warmup_iters", c.train.warmup_iters},
                  {"total_iters", c.train.total_iters},
                  {"batch_size", c.train.batch_size},
                  {"sigma", c.train.sigma},
                  {"alpha", c.train.alpha},
                  {"seed", c.train.seed},
                  {"ablation", to_string(c.train.ablation)},
                  {"clip_norm", c.train.clip_norm}};
    j["sampler"] = {{"n_steps", c.sampler.n_steps},
                    {"sigma", c.sampler.sigma},
                    {"alpha", c.sampler.alpha},
                    {"seed", c.sampler.seed},
                    {"guidance_weight", c.sampler.guidance_weight},
                    {"batch_size", c.sampler.batch_size}};
    j["eval"] = {{"n_runs", c.eval.n_runs},
                 {"seed", c.eval.seed},
                 {"max_steps", c.eval.max_steps},
                 {"encoder_steps", c.eval.encoder_steps}};
    return j;
}

ExperimentConfig from_json(const Json& j) {
    ExperimentConfig c;
    Section top(j, "config");
    top.get("preset", c.preset);
    top.get("preset_scale", c.preset_scale);
    if (const Json* d = top.child("data")) {
        Section s(*d, "data");
        s.get("source", c.data.source);
        s.get("window_len", c.data.window_len);
        s.get("stride", c.data.stride);
        s.get("n_samples", c.data.n_samples);
        s.get("n_features", c.data.n_features);
        s.get("has_header", c.data.has_header);
        s.get("drop_non_numeric_columns", c.data.drop_non_numeric_columns);
        s.get("split_seed", c.data.split_seed);
        s.get("test_fraction", c.data.test_fraction);
        s.finish();
    }
    if (const Json* n = top.child("net")) {
        Section s(*n, "net");
        s.get("n_heads", c.net.n_heads);
        s.get("head_dim", c.net.head_dim);
        s.get("enc_layers", c.net.enc_layers);
        s.get("dec_layers", c.net.dec_layers);
        s.get("conv_kernel", c.net.conv_kernel);
        s.get("n_experts", c.net.n_experts);
        s.get("top_k", c.net.top_k);
        std::string gn = gate_norm_name(c.net.gate_normalization);
        s.get("gate_normalization", gn);
        c.net.gate_normalization = parse_gate_norm(gn);
        s.get("untied_paths", c.net.untied_paths);
        s.finish();
    }
    if (const Json* t = top.child("train")) {
        Section s(*t, "train");
        s.get("lr_init", c.train.lr_init);
        s.get("warmup_iters", c.train.warmup_iters);
        s.get("total_iters", c.train.total_iters);
        s.get("batch_size", c.train.batch_size);
        s.get("sigma", c.train.sigma);
        s.get("alpha", c.train.alpha);
        s.get("seed", c.train.seed);
        std::string ab = to_string(c.train.ablation);
        s.get("ablation", ab);
        c.train.ablation = parse_ablation(ab);
        s.get("clip_norm", c.train.clip_norm);
        s.finish();
    }
    if (const Json* sm = top.child("sampler")) {
        Section s(*sm, "sampler");
        s.get("n_steps", c.sampler.n_steps);
        s.get("sigma", c.sampler.sigma);
        s.get("alpha", c.sampler.alpha);
        s.get("seed", c.sampler.seed);
        s.get("guidance_weight", c.sampler.guidance_weight);
        s.get("batch_size", c.sampler.batch_size);
        s.finish();
    }
    if (const Json* e = top.child("eval")) {
        Section s(*e, "eval");
        s.get("n_runs", c.eval.n_runs);
        s.get("seed", c.eval.seed);
        s.get("max_steps", c.eval.max_steps);
        s.get("encoder_steps", c.eval.encoder_steps);
        s.finish();
    }
    top.finish();
    c.validate();
    return c;
}

std::string canonical_text(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

ExperimentConfig parse_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

ExperimentConfig load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

void apply_override(Json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form a.b=c");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
        if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key '" + path + "'");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }

    Json value = Json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded() || node->is_string()) value = raw;
    if (node->is_number() && value.is_number()) {
        if (node->is_number_integer() && !value.is_number_integer()) {
            throw ConfigError("config key '" + path + "' expects an integer, got '" + raw + "'");
        }
    } else if (node->type() != value.type()) {
        throw ConfigError("config key '" + path + "' cannot take value '" + raw + "'");
    }
    *node = value;
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments) {
    Json j = to_json(cfg);
    for (const auto& a : assignments) apply_override(j, a);
    return from_json(j);
}

const std::vector<PresetRow>& preset_table() {
    static const std::vector<PresetRow> rows = {
        {"sines", 5, 4, 16, 1, 2, 128, 500, 12000},   {"stocks", 6, 4, 16, 2, 2, 64, 500, 10000},
        {"etth1", 7, 4, 16, 3, 2, 128, 500, 18000},   {"mujoco", 14, 4, 16, 3, 2, 128, 1000, 14000},
        {"energy", 28, 4, 24, 4, 3, 64, 1000, 25000}, {"fmri", 50, 4, 24, 4, 4, 128, 1000, 15000},
    };
    return rows;
}

ExperimentConfig make_preset(const std::string& name, const std::string& scale) {
    if (scale != "paper" && scale != "desk") throw ConfigError("preset scale must be paper or desk, got '" + scale + "'");
    for (const PresetRow& r : preset_table()) {
        if (r.name != name) continue;
        ExperimentConfig c;
        c.preset = name;
        c.preset_scale = scale;
        c.data.source = name == "sines" ? "sines" : "";
        c.data.n_features = r.n_features;
        c.net.n_heads = r.n_heads;
        c.net.head_dim = scale == "desk" ? r.head_dim / 2 : r.head_dim;
        c.net.enc_layers = r.enc_layers;
        c.net.dec_layers = r.dec_layers;
        c.train.batch_size = r.batch_size;
        c.train.total_iters = scale == "desk" ? r.training_steps / 3 : r.training_steps;
        c.sampler.n_steps = r.sampling_steps;
        return c;
    }
    throw ConfigError("unknown preset '" + name + "' (expected sines, stocks, etth1, mujoco, energy, fmri)");
}

}  // namespace pafm::config
