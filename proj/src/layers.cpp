#include "pafm/layers.hpp"

#include <cmath>

namespace pafm::layers {

Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    Matrix m(fan_in, fan_out);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

void add_linear(ag::ParameterStore& store, const std::string& prefix, Index in, Index out, Rng& rng, bool zero_init) {
    store.add(prefix + ".weight", zero_init ? Matrix(Matrix::Zero(in, out)) : xavier_uniform(in, out, rng));
    store.add(prefix + ".bias", Matrix::Zero(1, out));
}

ag::Var linear(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix) {
    return ag::linear(x, g.param(store.at(prefix + ".weight")), g.param(store.at(prefix + ".bias")));
}

void add_layer_norm(ag::ParameterStore& store, const std::string& prefix, Index width) {
    store.add(prefix + ".gamma", Matrix::Ones(1, width));
    store.add(prefix + ".beta", Matrix::Zero(1, width));
}

ag::Var layer_norm(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix) {
    return ag::layer_norm_affine(x, g.param(store.at(prefix + ".gamma")), g.param(store.at(prefix + ".beta")));
}

void add_feed_forward(ag::ParameterStore& store, const std::string& prefix, Index width, Index hidden, Rng& rng) {
    add_linear(store, prefix + ".fc1", width, hidden, rng);
    add_linear(store, prefix + ".fc2", hidden, width, rng);
}

ag::Var feed_forward(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix) {
    return linear(g, ag::gelu(linear(g, x, store, prefix + ".fc1")), store, prefix + ".fc2");
}

void add_attention(ag::ParameterStore& store, const std::string& prefix, Index width, Rng& rng) {
    for (const char* part : {".q", ".k", ".v", ".o"}) add_linear(store, prefix + part, width, width, rng);
}

ag::Var attention(ag::Graph& g, const ag::Var& query_in, const ag::Var& kv_in, ag::ParameterStore& store,
                  const std::string& prefix, Index batch, Index heads, std::vector<Matrix>* probs_out) {
    ag::Var q = linear(g, query_in, store, prefix + ".q");
    ag::Var k = linear(g, kv_in, store, prefix + ".k");
    ag::Var v = linear(g, kv_in, store, prefix + ".v");
    return linear(g, ag::attention(q, k, v, batch, heads, probs_out), store, prefix + ".o");
}

void add_conv1d(ag::ParameterStore& store, const std::string& prefix, Index in, Index out, Index kernel, Rng& rng) {
    store.add(prefix + ".weight", xavier_uniform(kernel * in, out, rng));
    store.add(prefix + ".bias", Matrix::Zero(1, out));
}

ag::Var conv1d(ag::Graph& g, const ag::Var& x, ag::ParameterStore& store, const std::string& prefix, Index batch,
               Index kernel, Index dilation, bool causal) {
    if (kernel == 1) return linear(g, x, store, prefix);
    return linear(g, ag::im2col_time(x, batch, kernel, dilation, causal), store, prefix);
}

}  // namespace pafm::layers
