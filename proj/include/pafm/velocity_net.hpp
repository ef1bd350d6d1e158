#pragma once

// Dual-path velocity field: convolutional embedding, transformer encoder,
// AdaLN-conditioned trajectory decoder (self-attention, cross-attention over
// the perturbed context, flow-routing MoE) and a convolutional projector.
//
// Batched tensors are stacked row-wise: sample b occupies rows
// [b * seq_len, (b + 1) * seq_len).

#include <cstdint>
#include <string>
#include <vector>

#include "pafm/autograd.hpp"
#include "pafm/flowmath.hpp"
#include "pafm/frm_moe.hpp"

namespace pafm::net {

enum class Mixer { Frm, Mlp };

struct NetConfig {
    int seq_len = 24;
    int n_features = 5;
    int d_model = 64;
    int n_heads = 4;
    int head_dim = 16;
    int enc_layers = 1;
    int dec_layers = 2;
    int conv_kernel = 3;
    int time_embed_dim = 64;
    int ffn_hidden = 256;
    moe::FrmConfig frm;

    Mixer mixer = Mixer::Frm;   // decoder token mixer after attention
    bool use_decoder = true;    // false: projector reads the encoder output
    bool perturbation = true;   // false: single clean path, v_final = v
    bool untied_paths = false;  // separate embed/encoder weights for the perturbed path

    void validate() const;
};

// Fills d_model = heads * head_dim and the widths derived from it.
NetConfig make_net_config(int seq_len, int n_features, int n_heads, int head_dim, int enc_layers, int dec_layers,
                          int n_experts = 4, int top_k = 2);

// Sinusoidal embedding of flow times, one row per entry of t.
Matrix time_embedding(const std::vector<double>& t, int dim);

struct PathVars {
    ag::Var v;
    ag::Var v_pert;
    ag::Var gate;
    ag::Var v_final;
};

class VelocityNet {
public:
    VelocityNet(NetConfig cfg, std::uint64_t seed);
    // Adopts existing parameters; every expected key must be present with the right shape.
    VelocityNet(NetConfig cfg, ag::ParameterStore params);

    const NetConfig& config() const { return cfg_; }
    ag::ParameterStore& params() { return params_; }
    const ag::ParameterStore& params() const { return params_; }
    std::size_t parameter_count() const { return params_.scalar_count(); }

    // Graph-level stages over stacked batches.
    ag::Var embed(ag::Graph& g, const ag::Var& x, Index batch, bool perturbed_path = false);
    ag::Var encode(ag::Graph& g, const ag::Var& h, Index batch, bool perturbed_path = false);
    ag::Var decode(ag::Graph& g, const ag::Var& e, const Matrix& t_embed, const ag::Var& ctx, Index batch);
    ag::Var project(ag::Graph& g, const ag::Var& d, Index batch);
    ag::Var refine_gate(ag::Graph& g, const ag::Var& v);

    // Full dual-path evaluation; t holds one flow time per sample.
    PathVars forward(ag::Graph& g, const ag::Var& xt, const ag::Var& xt_pert, const std::vector<double>& t,
                     double alpha);

    // Inference conveniences on stacked matrices.
    Matrix embed(const Matrix& x) const;
    Matrix encode(const Matrix& h) const;
    Matrix decode(const Matrix& e, double t, const Matrix& ctx) const;
    Matrix project(const Matrix& d) const;
    flow::VelocityOutput dual_path_forward(const Matrix& xt, const Matrix& xt_pert, double t, double alpha) const;
    flow::VelocityOutput dual_path_forward(const Matrix& xt, const Matrix& xt_pert, const std::vector<double>& t,
                                           double alpha) const;

    // Expected parameter names and shapes for a configuration.
    static ag::ParameterStore initial_parameters(const NetConfig& cfg, std::uint64_t seed);

private:
    Index batch_of(const Matrix& stacked) const;
    std::string path_prefix(bool perturbed_path) const;

    NetConfig cfg_;
    ag::ParameterStore params_;
};

// Scalar parameter count of a freshly initialized network.
std::size_t count_parameters(const NetConfig& cfg);

}  // namespace pafm::net
