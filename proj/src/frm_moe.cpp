#include "pafm/frm_moe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pafm/errors.hpp"
#include "pafm/layers.hpp"

namespace pafm::moe {

void FrmConfig::validate() const {
    if (n_experts < 1) throw ConfigError("frm: n_experts must be >= 1");
    if (top_k < 1 || top_k > n_experts) {
        throw ConfigError("frm: top_k must be in [1, n_experts], got k=" + std::to_string(top_k) +
                          " with M=" + std::to_string(n_experts));
    }
    if (d_model < 1 || d_hidden < 1) throw ConfigError("frm: d_model and d_hidden must be >= 1");
}

Matrix RoutingState::dense_weights() const {
    Matrix dense = Matrix::Zero(scores.rows(), scores.cols());
    for (Index i = 0; i < selected.rows(); ++i) {
        for (Index j = 0; j < selected.cols(); ++j) dense(i, selected(i, j)) = weights(i, j);
    }
    return dense;
}

namespace {

// Softmax weights before masking: over the selected entries (Selected) or all
// entries (Full). The returned row has zeros at unselected positions either way.
void gate_row(const Matrix& scores, Index row, const std::vector<int>& chosen, GateNormalization norm,
              RowVector& dense_out, RowVector& pre_mask) {
    const Index m = scores.cols();
    pre_mask = RowVector::Zero(m);
    double mx = -std::numeric_limits<double>::infinity();
    if (norm == GateNormalization::Selected) {
        for (int e : chosen) mx = std::max(mx, scores(row, e));
        double z = 0.0;
        for (int e : chosen) {
            pre_mask(e) = std::exp(scores(row, e) - mx);
            z += pre_mask(e);
        }
        pre_mask /= z;
    } else {
        mx = scores.row(row).maxCoeff();
        pre_mask = (scores.row(row).array() - mx).exp();
        pre_mask /= pre_mask.sum();
    }
    dense_out = RowVector::Zero(m);
    for (int e : chosen) dense_out(e) = pre_mask(e);
}

std::vector<int> top_k_indices(const Matrix& scores, Index row, int k) {
    std::vector<int> idx(static_cast<std::size_t>(scores.cols()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores(row, a) > scores(row, b); });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace

RoutingState route_scores(const Matrix& scores, int top_k, GateNormalization norm) {
    if (top_k < 1 || top_k > scores.cols()) {
        throw ConfigError("route: top_k=" + std::to_string(top_k) + " exceeds n_experts=" + std::to_string(scores.cols()));
    }
    if (!scores.allFinite()) throw NumericError("route: non-finite gating scores");
    RoutingState st;
    st.scores = scores;
    st.selected.resize(scores.rows(), top_k);
    st.weights.resize(scores.rows(), top_k);
    RowVector dense, pre;
    for (Index i = 0; i < scores.rows(); ++i) {
        const std::vector<int> chosen = top_k_indices(scores, i, top_k);
        gate_row(scores, i, chosen, norm, dense, pre);
        for (int j = 0; j < top_k; ++j) {
            st.selected(i, j) = chosen[static_cast<std::size_t>(j)];
            st.weights(i, j) = dense(chosen[static_cast<std::size_t>(j)]);
        }
    }
    return st;
}

RoutingState route(const Matrix& z, const Matrix& gate_weights, int top_k, GateNormalization norm) {
    if (z.cols() != gate_weights.cols()) throw ArgumentError("route: gate weights width does not match d_model");
    if (top_k > gate_weights.rows()) {
        throw ConfigError("route: top_k=" + std::to_string(top_k) + " exceeds n_experts=" +
                          std::to_string(gate_weights.rows()));
    }
    return route_scores(z * gate_weights.transpose(), top_k, norm);
}

void init_frm_params(ag::ParameterStore& store, const std::string& prefix, const FrmConfig& cfg, Rng& rng) {
    cfg.validate();
    store.add(prefix + ".gate.weight", layers::xavier_uniform(cfg.n_experts, cfg.d_model, rng));
    for (int m = 0; m < cfg.n_experts; ++m) {
        layers::add_feed_forward(store, prefix + ".expert." + std::to_string(m), cfg.d_model, cfg.d_hidden, rng);
    }
    layers::add_layer_norm(store, prefix + ".norm", cfg.d_model);
}

namespace {

// Dense (N x M) gate weights as a differentiable function of the scores.
ag::Var gate_weights_op(ag::Graph& g, const ag::Var& scores, const RoutingState& st, GateNormalization norm) {
    const Index n = scores.rows();
    const Index m = scores.cols();
    Matrix dense = Matrix::Zero(n, m);
    Matrix pre = Matrix::Zero(n, m);
    RowVector drow, prow;
    for (Index i = 0; i < n; ++i) {
        std::vector<int> chosen(st.selected.row(i).data(), st.selected.row(i).data() + st.selected.cols());
        gate_row(scores.value(), i, chosen, norm, drow, prow);
        dense.row(i) = drow;
        pre.row(i) = prow;
    }
    Matrix mask = Matrix::Zero(n, m);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < st.selected.cols(); ++j) mask(i, st.selected(i, j)) = 1.0;
    }
    return g.record(std::move(dense), {scores}, [scores, pre = std::move(pre), mask = std::move(mask)](ag::Graph& gr, const Matrix& d) {
        // Upstream gradient lives only on selected entries; softmax Jacobian of
        // the pre-mask weights maps it back onto the scores.
        Matrix dm = d.cwiseProduct(mask);
        Vector inner = dm.cwiseProduct(pre).rowwise().sum();
        gr.accumulate(scores, pre.cwiseProduct((dm.colwise() - inner).matrix()));
    });
}

}  // namespace

ag::Var frm_forward(ag::Graph& g, const ag::Var& z, ag::ParameterStore& store, const std::string& prefix,
                    const FrmConfig& cfg, RoutingState* routing_out) {
    cfg.validate();
    if (z.cols() != cfg.d_model) throw ArgumentError("frm_forward: input width does not match d_model");
    if (!z.value().allFinite()) throw NumericError(prefix + ": non-finite input");
    const Index n = z.rows();

    ag::Var scores = ag::matmul_nt(z, g.param(store.at(prefix + ".gate.weight")));
    RoutingState st = route_scores(scores.value(), cfg.top_k, cfg.normalization);
    ag::Var gates = gate_weights_op(g, scores, st, cfg.normalization);

    std::vector<std::vector<Index>> rows_for(static_cast<std::size_t>(cfg.n_experts));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < st.selected.cols(); ++j) rows_for[static_cast<std::size_t>(st.selected(i, j))].push_back(i);
    }

    ag::Var mixed;
    for (int m = 0; m < cfg.n_experts; ++m) {
        const auto& rows = rows_for[static_cast<std::size_t>(m)];
        if (rows.empty()) continue;
        const std::string ep = prefix + ".expert." + std::to_string(m);
        ag::Var f = layers::feed_forward(g, ag::gather_rows(z, rows), store, ep);
        if (!f.value().allFinite()) throw NumericError(prefix + ": expert " + std::to_string(m) + " produced non-finite output");
        ag::Var y = ag::scatter_rows(ag::mul_col(f, ag::gather_column(gates, rows, m)), rows, n);
        mixed = mixed.valid() ? ag::add(mixed, y) : y;
    }
    if (routing_out) *routing_out = std::move(st);
    ag::Var out = layers::layer_norm(g, ag::add(z, mixed), store, prefix + ".norm");
    if (!out.value().allFinite()) throw NumericError(prefix + ": non-finite output");
    return out;
}

Matrix frm_forward(const Matrix& z, ag::ParameterStore& store, const std::string& prefix, const FrmConfig& cfg,
                   RoutingState* routing_out) {
    ag::Graph g(false);
    return frm_forward(g, g.constant(z), store, prefix, cfg, routing_out).value();
}

Matrix expert_forward(const Matrix& z, const ag::ParameterStore& store, const std::string& prefix, int expert) {
    const std::string ep = prefix + ".expert." + std::to_string(expert);
    auto& s = const_cast<ag::ParameterStore&>(store);
    ag::Graph g(false);
    return layers::feed_forward(g, g.constant(z), s, ep).value();
}

}  // namespace pafm::moe
