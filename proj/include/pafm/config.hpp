#pragma once

// Experiment configuration: the sections read by every command, their JSON
// form (the canonical text embedded in checkpoints and reports), dataset
// presets and `a.b=c` overrides.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pafm/frm_moe.hpp"

namespace pafm::config {

using Json = nlohmann::json;

enum class Ablation { Full, NoFrm, NoTd, NoTdTpb };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

struct DataConfig {
    std::string source = "sines";  // "sines" or a CSV path
    long window_len = 24;
    long stride = 1;
    long n_samples = 10000;        // sines only
    long n_features = 5;           // sines: generated dims; CSV: filled from the file
    bool has_header = true;
    bool drop_non_numeric_columns = true;
    std::uint64_t split_seed = 0;
    double test_fraction = 0.1;

    bool is_sines() const { return source == "sines"; }
};

// Architecture knobs; d_model = n_heads * head_dim and the widths derived
// from it are filled in when the network config is built.
struct NetSection {
    int n_heads = 4;
    int head_dim = 16;
    int enc_layers = 1;
    int dec_layers = 2;
    int conv_kernel = 3;
    int n_experts = 4;
    int top_k = 2;
    moe::GateNormalization gate_normalization = moe::GateNormalization::Selected;
    bool untied_paths = false;
};

struct TrainConfig {
    double lr_init = 0.0008;
    long warmup_iters = 500;
    long total_iters = 12000;
    long batch_size = 128;
    double sigma = 0.1;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    Ablation ablation = Ablation::Full;
    double clip_norm = 1.0;  // global gradient norm; <= 0 disables

    void validate() const;
};

struct SamplerConfig {
    long n_steps = 500;
    double sigma = 0.1;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    double guidance_weight = 0.05;
    long batch_size = 256;  // samples integrated together

    void validate() const;
};

struct EvalConfig {
    long n_runs = 5;
    std::uint64_t seed = 0;
    long max_steps = 5000;     // classifier / predictor optimizer steps
    long encoder_steps = 1500;  // context-FID encoder training steps

    void validate() const;
};

struct ExperimentConfig {
    std::string preset;        // informational: the preset the config started from
    std::string preset_scale = "paper";
    DataConfig data;
    NetSection net;
    TrainConfig train;
    SamplerConfig sampler;
    EvalConfig eval;

    void validate() const;
    // Sets every seed field; the individual streams are derived from it.
    void set_seed(std::uint64_t seed);
};

Json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys and wrong types raise ConfigError.
ExperimentConfig from_json(const Json& j);
std::string canonical_text(const ExperimentConfig& cfg);
ExperimentConfig parse_text(const std::string& text);
ExperimentConfig load_file(const std::string& path);

// `a.b=c` applied to the JSON form. The value is parsed as JSON when possible
// (numbers, booleans) and taken as a string otherwise.
void apply_override(Json& j, const std::string& assignment);
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments);

struct PresetRow {
    std::string name;
    long n_features;
    int n_heads;
    int head_dim;
    int enc_layers;
    int dec_layers;
    long batch_size;
    long sampling_steps;
    long training_steps;
};

const std::vector<PresetRow>& preset_table();
// scale: "paper" or "desk" (head_dim halved, training iterations divided by 3).
ExperimentConfig make_preset(const std::string& name, const std::string& scale = "paper");

}  // namespace pafm::config
