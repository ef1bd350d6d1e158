#pragma once

// Euler integration of the refined velocity field from Gaussian noise, plus
// conditional generation (imputation / prediction) by replacement along the
// noise-to-observation path.

#include <cstdint>
#include <memory>
#include <vector>

#include "pafm/config.hpp"
#include "pafm/data.hpp"
#include "pafm/flowmath.hpp"
#include "pafm/trainer.hpp"
#include "pafm/velocity_net.hpp"

namespace pafm::sample {

using config::SamplerConfig;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Refined velocity over a stack of sequences; x_pert = x + offset.
class Field {
public:
    virtual ~Field() = default;
    virtual Index seq_len() const = 0;
    virtual Index n_features() const = 0;
    virtual Matrix velocity(const Matrix& x, const Matrix& offset, double t, double alpha) const = 0;

    // Velocity together with the gradient in x of
    //   sum(weight .* (x + (1 - t) v(x) - target)^2),
    // the squared miss of the predicted endpoint. The default treats v as
    // constant in x.
    virtual Matrix guided_velocity(const Matrix& x, const Matrix& offset, double t, double alpha, const Matrix& weight,
                                   const Matrix& target, Matrix& grad) const;
};

class NetField final : public Field {
public:
    explicit NetField(net::VelocityNet net);
    Index seq_len() const override { return net_.config().seq_len; }
    Index n_features() const override { return net_.config().n_features; }
    Matrix velocity(const Matrix& x, const Matrix& offset, double t, double alpha) const override;
    Matrix guided_velocity(const Matrix& x, const Matrix& offset, double t, double alpha, const Matrix& weight,
                           const Matrix& target, Matrix& grad) const override;
    const net::VelocityNet& net() const { return net_; }

private:
    mutable net::VelocityNet net_;
};

// A closed-form field f(x, t) standing in for the network; refinement uses a
// unit gate: v_final = f(x) + alpha * (f(x + offset) - f(x)).
class StubField final : public Field {
public:
    StubField(flow::VelocityField f, Index seq_len, Index n_features);
    Index seq_len() const override { return seq_len_; }
    Index n_features() const override { return n_features_; }
    Matrix velocity(const Matrix& x, const Matrix& offset, double t, double alpha) const override;

private:
    flow::VelocityField f_;
    Index seq_len_;
    Index n_features_;
};

std::unique_ptr<Field> field_from_checkpoint(const train::Checkpoint& ckpt);

std::vector<Matrix> sample_unconditional(const Field& field, long n, const SamplerConfig& cfg);
std::vector<Matrix> sample_unconditional(const train::Checkpoint& ckpt, long n, const SamplerConfig& cfg);

struct ConditionSpec {
    Mask observed_mask;      // true where the value is known
    Matrix observed_values;  // read only where the mask is true
};

// Conditions are integrated in chunks of cfg.batch_size; with no observed
// entries the result equals sample_unconditional for the same seed.
std::vector<Matrix> sample_conditional(const Field& field, const std::vector<ConditionSpec>& conds,
                                       const SamplerConfig& cfg);
Matrix sample_conditional(const Field& field, const ConditionSpec& cond, const SamplerConfig& cfg);

struct TaskResult {
    Matrix output;
    Mask observed;      // true where the input window was kept
    long n_missing = 0;
    double mse = 0.0;   // over missing entries only
};

Mask random_missing_mask(Index rows, Index cols, double missing_ratio, std::uint64_t seed);
Mask horizon_mask(Index rows, Index cols, long horizon);

// Conditional generation for a batch of windows with given observation masks.
std::vector<TaskResult> complete(const Field& field, const std::vector<data::TimeSeriesWindow>& windows,
                                 const std::vector<Mask>& observed, const SamplerConfig& cfg);

TaskResult impute(const Field& field, const data::TimeSeriesWindow& window, double missing_ratio,
                  const SamplerConfig& cfg, std::uint64_t seed);
TaskResult predict(const Field& field, const data::TimeSeriesWindow& window, long horizon, const SamplerConfig& cfg);

// Per-window masks seeded from (seed, window position).
std::vector<TaskResult> impute_all(const Field& field, const std::vector<data::TimeSeriesWindow>& windows,
                                   double missing_ratio, const SamplerConfig& cfg, std::uint64_t seed);
std::vector<TaskResult> predict_all(const Field& field, const std::vector<data::TimeSeriesWindow>& windows,
                                    long horizon, const SamplerConfig& cfg);

// Mean of the per-window MSEs weighted by their missing counts.
double pooled_mse(const std::vector<TaskResult>& results);

}  // namespace pafm::sample
