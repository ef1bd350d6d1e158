#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Graph records every op in creation order, so reverse creation order is a
// valid topological order for the backward sweep. Parameters live outside the
// graph in a ParameterStore; backward() accumulates into Parameter::grad.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pafm/matrix.hpp"

namespace pafm::ag {

struct Parameter {
    Matrix value;
    Matrix grad;
};

class ParameterStore {
public:
    Parameter& add(const std::string& name, Matrix init);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    std::map<std::string, Parameter>& items() { return params_; }
    const std::map<std::string, Parameter>& items() const { return params_; }

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    void zero_grad();
    double grad_norm() const;

private:
    std::map<std::string, Parameter> params_;
};

class Graph;

class Var {
public:
    Var() = default;
    Var(Graph* g, int id) : graph_(g), id_(id) {}

    const Matrix& value() const;
    // Gradient after Graph::backward(); empty if nothing flowed into this node.
    const Matrix& grad() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Graph* graph() const { return graph_; }
    int id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

private:
    Graph* graph_ = nullptr;
    int id_ = -1;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Matrix& out_grad)>;

    // With requires_grad == false ops only compute values (inference mode).
    explicit Graph(bool requires_grad = true) : requires_grad_(requires_grad) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Matrix m);
    // A leaf whose gradient is kept and readable via Var::grad().
    Var input(Matrix m);
    Var param(Parameter& p);

    void backward(const Var& scalar);

    bool requires_grad() const { return requires_grad_; }
    // With tracking off, param() leaves act as constants; gradients still flow
    // to inputs but nothing is written into Parameter::grad.
    void set_param_tracking(bool on) { track_params_ = on; }
    bool tracks(const Var& v) const { return requires_grad_ && nodes_[v.id()].tracked; }

    const Matrix& value(int id) const { return nodes_[id].value; }
    const Matrix& grad(int id) const { return nodes_[id].grad; }

    // Adds g into the gradient slot of v (no-op for untracked nodes).
    template <typename Expr>
    void accumulate(const Var& v, const Expr& g) {
        Node& n = nodes_[v.id()];
        if (!n.tracked) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }
    Matrix& grad_slot(const Var& v);

    // Records an op output. `parents` decide whether the output is tracked.
    Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
    Var record(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool tracked = false;
    };

    bool requires_grad_;
    bool track_params_ = true;
    std::deque<Node> nodes_;
};

// ---- elementwise / linear algebra -------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// s * a + c, elementwise.
Var affine(const Var& a, double s, double c);
Var matmul(const Var& a, const Var& b);
// x * w + b, with b a 1 x out row broadcast over rows.
Var linear(const Var& x, const Var& w, const Var& b);
// x * w^T for w of shape (out x in), no bias.
Var matmul_nt(const Var& x, const Var& w);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);
Var silu(const Var& a);

// Row-wise normalization to zero mean / unit variance.
Var layer_norm(const Var& x, double eps = 1e-5);
Var layer_norm_affine(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- shape ops ---------------------------------------------------------------

Var slice_cols(const Var& x, Index start, Index count);
// Each row of x repeated `times` times consecutively: (B x C) -> (B*times x C).
Var repeat_rows(const Var& x, Index times);
// The whole block stacked `times` times: (T x C) -> (times*T x C).
Var tile_rows(const Var& x, Index times);
Var gather_rows(const Var& x, const std::vector<Index>& rows);
// Column `col` of x at the given rows, as an (n x 1) matrix.
Var gather_column(const Var& x, const std::vector<Index>& rows, Index col);
// Places the rows of x at positions `rows` of an (n_rows x C) zero matrix.
Var scatter_rows(const Var& x, const std::vector<Index>& rows, Index n_rows);
// x (N x C) with every row i scaled by col(i, 0).
Var mul_col(const Var& x, const Var& col);
// (B*T x C) -> (B x C) mean over each group of T consecutive rows.
Var mean_pool(const Var& x, Index group);

// ---- sequence ops ---------------------------------------------------------------

// Unfolds a stack of `batch` sequences (batch*T x C) for a 1-D convolution
// along time: output row (b, i) holds [x(b, i + o_0), ..., x(b, i + o_{k-1})]
// with zero padding outside the sequence. Offsets are centred ("same") or
// strictly non-positive ("causal").
Var im2col_time(const Var& x, Index batch, Index kernel, Index dilation, bool causal);

// Multi-head scaled dot-product attention. q: (batch*Lq x D), k, v: (batch*Lk x D).
// D is split into `heads` contiguous column groups.
Var attention(const Var& q, const Var& k, const Var& v, Index batch, Index heads,
              std::vector<Matrix>* probs_out = nullptr);

// ---- losses (1 x 1 outputs) -------------------------------------------------------

Var mse(const Var& pred, const Matrix& target);
Var weighted_mse(const Var& pred, const Matrix& target, const Matrix& weights);
Var mae(const Var& pred, const Matrix& target);
Var weighted_mae(const Var& pred, const Matrix& target, const Matrix& weights);
Var bce_with_logits(const Var& logits, const Matrix& labels);
Var sum_all(const Var& a);

}  // namespace pafm::ag
