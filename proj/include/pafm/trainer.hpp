#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pafm/autograd.hpp"
#include "pafm/config.hpp"
#include "pafm/data.hpp"
#include "pafm/velocity_net.hpp"

namespace pafm::train {

using config::Ablation;
using config::TrainConfig;

net::NetConfig apply_ablation(net::NetConfig cfg, Ablation mode);

// Network config of an experiment: data shape + net section + ablation.
net::NetConfig build_net_config(const config::ExperimentConfig& cfg);

// Perturbation scale actually used in training (0 when the ablation drops it).
double effective_sigma(const TrainConfig& cfg);

// Linear ramp 0 -> lr_init over warmup_iters, cosine decay to 0 at total_iters.
double learning_rate(const TrainConfig& cfg, long iter);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adaptive moment estimation with bias correction; moments keyed by parameter name.
class Adam {
public:
    explicit Adam(const ag::ParameterStore& params, AdamOptions opts = {});

    void step(ag::ParameterStore& params, double lr);

    long steps() const { return steps_; }
    std::map<std::string, Matrix>& first_moments() { return m_; }
    std::map<std::string, Matrix>& second_moments() { return v_; }
    const std::map<std::string, Matrix>& first_moments() const { return m_; }
    const std::map<std::string, Matrix>& second_moments() const { return v_; }
    void restore(std::map<std::string, Matrix> m, std::map<std::string, Matrix> v, long steps);

private:
    AdamOptions opts_;
    long steps_ = 0;
    std::map<std::string, Matrix> m_;
    std::map<std::string, Matrix> v_;
};

// Scales all gradients so their global norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(ag::ParameterStore& params, double max_norm);

struct Checkpoint {
    config::ExperimentConfig config;
    long iter = 0;
    ag::ParameterStore params;
    std::map<std::string, Matrix> adam_m;
    std::map<std::string, Matrix> adam_v;
    data::NormalizationStats normalization;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// The whole file is validated before anything is returned.
Checkpoint load_checkpoint(const std::filesystem::path& path);

net::VelocityNet make_net(const Checkpoint& ckpt);

struct LossRecord {
    long iter = 0;  // 1-based optimizer step
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainOptions {
    const Checkpoint* resume = nullptr;
    long stop_after = -1;  // stop once this many iterations are done (< total_iters)
    data::NormalizationStats normalization;
    std::function<void(const LossRecord&)> on_iter;
};

struct TrainResult {
    Checkpoint checkpoint;  // last finite state
    std::vector<LossRecord> log;
    bool ok = true;
    long failed_iter = -1;
    std::string failure;
};

TrainResult train(const std::vector<data::TimeSeriesWindow>& windows, const config::ExperimentConfig& cfg,
                  const TrainOptions& opts = {});

// Seeds of the per-iteration streams, exposed so alternative loops can share them.
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t batch_seed(std::uint64_t seed);
std::uint64_t noise_seed(std::uint64_t seed, long iter);

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

}  // namespace pafm::train
