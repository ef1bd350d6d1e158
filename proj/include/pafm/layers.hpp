#pragma once

// Parameterized building blocks shared by the velocity network and the
// metric models. Each block reads its parameters from a ParameterStore under
// a name prefix; the matching add_* function creates them.

#include <string>

#include "pafm/autograd.hpp"
#include "pafm/rng.hpp"

namespace pafm::layers {

Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng);

// <prefix>.weight (in x out), <prefix>.bias (1 x out)
void add_linear(ag::ParameterStore& store, const std::string& prefix, Index in, Index out, Rng& rng,
                bool zero_init = false);
ag::Var linear(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix);

// <prefix>.gamma, <prefix>.beta (1 x width)
void add_layer_norm(ag::ParameterStore& store, const std::string& prefix, Index width);
ag::Var layer_norm(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix);

// <prefix>.fc1, <prefix>.fc2 with GELU in between.
void add_feed_forward(ag::ParameterStore& store, const std::string& prefix, Index width, Index hidden, Rng& rng);
ag::Var feed_forward(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix);

// <prefix>.q, .k, .v, .o linear maps (width x width).
void add_attention(ag::ParameterStore& store, const std::string& prefix, Index width, Rng& rng);
ag::Var attention(ag::Graph& g, const ag::Var& query_in, const ag::Var& kv_in, ag::ParameterStore& store,
                  const std::string& prefix, Index batch, Index heads, std::vector<Matrix>* probs_out = nullptr);

// 1-D convolution along time over a stack of `batch` sequences.
// <prefix>.weight is (kernel * in) x out; row block j holds the tap at offset j.
void add_conv1d(ag::ParameterStore& store, const std::string& prefix, Index in, Index out, Index kernel, Rng& rng);
ag::Var conv1d(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix, Index batch,
               Index kernel, Index dilation = 1, bool causal = false);

}  // namespace pafm::layers
