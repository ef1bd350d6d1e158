#pragma once

// Flow-routing mixture of experts: per-timestep top-k gating over expert
// feed-forward networks, followed by a residual connection and LayerNorm.

#include <string>
#include <vector>

#include "pafm/autograd.hpp"
#include "pafm/matrix.hpp"
#include "pafm/rng.hpp"

namespace pafm::moe {

enum class GateNormalization {
    Selected,  // softmax over the k selected scores (rows sum to 1)
    Full,      // softmax over all M scores, unselected entries dropped
};

struct FrmConfig {
    int n_experts = 4;
    int top_k = 2;
    int d_model = 64;
    int d_hidden = 256;
    GateNormalization normalization = GateNormalization::Selected;

    void validate() const;
};

using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RoutingState {
    Matrix scores;         // tau x M, Z W^T
    IndexMatrix selected;  // tau x k, by descending score, ties to the lower index
    Matrix weights;        // tau x k normalized gates aligned with `selected`

    // tau x M with the gate of each selected expert and zeros elsewhere.
    Matrix dense_weights() const;
};

RoutingState route(const Matrix& z, const Matrix& gate_weights, int top_k,
                   GateNormalization norm = GateNormalization::Selected);

// Routing from precomputed scores.
RoutingState route_scores(const Matrix& scores, int top_k, GateNormalization norm = GateNormalization::Selected);

// Parameter names under `prefix`:
//   gate.weight            M x d_model
//   expert.<m>.fc1.weight  d_model x d_hidden, .bias 1 x d_hidden
//   expert.<m>.fc2.weight  d_hidden x d_model, .bias 1 x d_model
//   norm.gamma / norm.beta 1 x d_model
void init_frm_params(ag::ParameterStore& store, const std::string& prefix, const FrmConfig& cfg, Rng& rng);

// Rows of z are independent timesteps. Only the selected experts of a row are
// evaluated on it; experts selected nowhere never enter the graph.
ag::Var frm_forward(ag::Graph& g, const ag::Var& z, ag::ParameterStore& store, const std::string& prefix,
                    const FrmConfig& cfg, RoutingState* routing_out = nullptr);

Matrix frm_forward(const Matrix& z, ag::ParameterStore& store, const std::string& prefix, const FrmConfig& cfg,
                   RoutingState* routing_out = nullptr);

// The expert FFN f_m on its own.
Matrix expert_forward(const Matrix& z, const ag::ParameterStore& store, const std::string& prefix, int expert);

}  // namespace pafm::moe
