#include "pafm/autograd.hpp"

#include <cmath>
#include <memory>

#include "pafm/errors.hpp"

namespace pafm::ag {

// ---- ParameterStore ----------------------------------------------------------

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw ArgumentError("duplicate parameter name: " + name);
    it->second.grad = Matrix::Zero(init.rows(), init.cols());
    it->second.value = std::move(init);
    return it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
    return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
    return it->second;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& [name, p] : params_) p.grad.setZero();
}

double ParameterStore::grad_norm() const {
    double s = 0.0;
    for (const auto& [name, p] : params_) s += p.grad.squaredNorm();
    return std::sqrt(s);
}

// ---- Var / Graph ----------------------------------------------------------------

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(Matrix m) {
    nodes_.push_back(Node{std::move(m), {}, nullptr, nullptr, false});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::input(Matrix m) {
    nodes_.push_back(Node{std::move(m), {}, nullptr, nullptr, requires_grad_});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Parameter& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    n.tracked = requires_grad_ && track_params_;
    if (n.tracked) {
        Parameter* target = &p;
        n.backward = [target](Graph&, const Matrix& g) { target->grad += g; };
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Graph::grad_slot(const Var& v) {
    Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Graph::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
    bool tracked = false;
    if (requires_grad_) {
        for (const Var& p : parents) tracked = tracked || nodes_[p.id()].tracked;
    }
    Node n;
    n.value = std::move(value);
    n.tracked = tracked;
    if (tracked) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::record(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
    bool tracked = false;
    if (requires_grad_) {
        for (const Var& p : parents) tracked = tracked || nodes_[p.id()].tracked;
    }
    Node n;
    n.value = std::move(value);
    n.tracked = tracked;
    if (tracked) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::backward(const Var& scalar) {
    if (!requires_grad_) throw ArgumentError("backward() on a graph built without gradients");
    if (scalar.rows() != 1 || scalar.cols() != 1) throw ArgumentError("backward() needs a 1x1 output");
    Node& root = nodes_[scalar.id()];
    if (!root.tracked) return;
    root.grad = Matrix::Ones(1, 1);
    for (int id = scalar.id(); id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
    }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ArgumentError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()) + ")");
    }
}

void require_same_graph(const Var& a, const Var& b) {
    if (a.graph() != b.graph()) throw ArgumentError("vars belong to different graphs");
}

}  // namespace

// ---- elementwise / linear algebra -------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_graph(a, b);
    require_same_shape(a, b, "add");
    Graph& g = *a.graph();
    return g.record(a.value() + b.value(), {a, b}, [a, b](Graph& gr, const Matrix& d) {
        gr.accumulate(a, d);
        gr.accumulate(b, d);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_graph(a, b);
    require_same_shape(a, b, "sub");
    Graph& g = *a.graph();
    return g.record(a.value() - b.value(), {a, b}, [a, b](Graph& gr, const Matrix& d) {
        gr.accumulate(a, d);
        gr.accumulate(b, -d);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_graph(a, b);
    require_same_shape(a, b, "mul");
    Graph& g = *a.graph();
    return g.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Graph& gr, const Matrix& d) {
        if (gr.tracks(a)) gr.accumulate(a, d.cwiseProduct(b.value()));
        if (gr.tracks(b)) gr.accumulate(b, d.cwiseProduct(a.value()));
    });
}

Var scale(const Var& a, double s) {
    Graph& g = *a.graph();
    return g.record(a.value() * s, {a}, [a, s](Graph& gr, const Matrix& d) { gr.accumulate(a, d * s); });
}

Var affine(const Var& a, double s, double c) {
    Graph& g = *a.graph();
    Matrix out = (a.value() * s).array() + c;
    return g.record(std::move(out), {a}, [a, s](Graph& gr, const Matrix& d) { gr.accumulate(a, d * s); });
}

Var matmul(const Var& a, const Var& b) {
    require_same_graph(a, b);
    if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimension mismatch");
    Graph& g = *a.graph();
    return g.record(a.value() * b.value(), {a, b}, [a, b](Graph& gr, const Matrix& d) {
        if (gr.tracks(a)) gr.accumulate(a, d * b.value().transpose());
        if (gr.tracks(b)) gr.accumulate(b, a.value().transpose() * d);
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    require_same_graph(x, w);
    if (x.cols() != w.rows()) {
        throw ArgumentError("linear: input width " + std::to_string(x.cols()) + " does not match weight rows " +
                            std::to_string(w.rows()));
    }
    if (b.rows() != 1 || b.cols() != w.cols()) throw ArgumentError("linear: bias shape mismatch");
    Graph& g = *x.graph();
    Matrix out = x.value() * w.value();
    out.rowwise() += b.value().row(0);
    return g.record(std::move(out), {x, w, b}, [x, w, b](Graph& gr, const Matrix& d) {
        if (gr.tracks(x)) gr.accumulate(x, d * w.value().transpose());
        if (gr.tracks(w)) gr.accumulate(w, x.value().transpose() * d);
        if (gr.tracks(b)) gr.accumulate(b, d.colwise().sum());
    });
}

Var matmul_nt(const Var& x, const Var& w) {
    require_same_graph(x, w);
    if (x.cols() != w.cols()) throw ArgumentError("matmul_nt: inner dimension mismatch");
    Graph& g = *x.graph();
    return g.record(x.value() * w.value().transpose(), {x, w}, [x, w](Graph& gr, const Matrix& d) {
        if (gr.tracks(x)) gr.accumulate(x, d * w.value());
        if (gr.tracks(w)) gr.accumulate(w, d.transpose() * x.value());
    });
}

Var sigmoid(const Var& a) {
    Graph& g = *a.graph();
    Var y = g.constant(a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }));
    return g.record(y.value(), {a}, [a, y](Graph& gr, const Matrix& d) {
        const Matrix& s = y.value();
        gr.accumulate(a, d.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
    });
}

Var tanh(const Var& a) {
    Graph& g = *a.graph();
    Var y = g.constant(a.value().array().tanh().matrix());
    return g.record(y.value(), {a}, [a, y](Graph& gr, const Matrix& d) {
        const Matrix& t = y.value();
        gr.accumulate(a, d.cwiseProduct((1.0 - t.array().square()).matrix()));
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// tanh through the vectorized exp; saturates cleanly to +-1 for large |u|.
template <typename Expr>
RowArray fast_tanh(const Expr& u) {
    return 1.0 - 2.0 / ((2.0 * u).exp() + 1.0);
}
}  // namespace

Var gelu(const Var& a) {
    Graph& g = *a.graph();
    const auto x = a.value().array();
    RowArray t = fast_tanh(kGeluC * (x + kGeluA * x.cube()));
    Matrix out = (0.5 * x * (1.0 + t)).matrix();
    if (!g.tracks(a)) return g.record(std::move(out), {a}, nullptr);
    return g.record(std::move(out), {a}, [a, t = std::move(t)](Graph& gr, const Matrix& d) {
        const auto v = a.value().array();
        const auto du = kGeluC * (1.0 + 3.0 * kGeluA * v.square());
        gr.accumulate(a, (d.array() * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t.square()) * du)).matrix());
    });
}

Var silu(const Var& a) {
    Graph& g = *a.graph();
    Matrix out = a.value().unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
    return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& d) {
        Matrix deriv = a.value().unaryExpr([](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
        gr.accumulate(a, d.cwiseProduct(deriv));
    });
}

namespace {

struct NormResult {
    Matrix xhat;
    Vector inv_std;
};

NormResult normalize_rows(const Matrix& x, double eps) {
    NormResult r;
    const Index n = x.rows();
    const double c = static_cast<double>(x.cols());
    r.xhat.resize(n, x.cols());
    r.inv_std.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double mean = x.row(i).sum() / c;
        const double var = (x.row(i).array() - mean).square().sum() / c;
        const double inv = 1.0 / std::sqrt(var + eps);
        r.inv_std(i) = inv;
        r.xhat.row(i) = (x.row(i).array() - mean) * inv;
    }
    return r;
}

// d/dx of row-wise normalization given upstream gradient w.r.t. xhat.
Matrix normalize_rows_backward(const Matrix& dxhat, const Matrix& xhat, const Vector& inv_std) {
    const double c = static_cast<double>(xhat.cols());
    Matrix dx(xhat.rows(), xhat.cols());
    for (Index i = 0; i < xhat.rows(); ++i) {
        const double mean_d = dxhat.row(i).sum() / c;
        const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / c;
        dx.row(i) = inv_std(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
    }
    return dx;
}

}  // namespace

Var layer_norm(const Var& x, double eps) {
    Graph& g = *x.graph();
    NormResult nr = normalize_rows(x.value(), eps);
    Var xhat = g.constant(nr.xhat);
    Vector inv = std::move(nr.inv_std);
    return g.record(xhat.value(), {x}, [x, xhat, inv](Graph& gr, const Matrix& d) {
        gr.accumulate(x, normalize_rows_backward(d, xhat.value(), inv));
    });
}

Var layer_norm_affine(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 || beta.cols() != x.cols()) {
        throw ArgumentError("layer_norm_affine: gamma/beta must be 1 x C");
    }
    Graph& g = *x.graph();
    NormResult nr = normalize_rows(x.value(), eps);
    Var xhat = g.constant(nr.xhat);
    Vector inv = std::move(nr.inv_std);
    Matrix out = nr.xhat.array().rowwise() * gamma.value().row(0).array();
    out.rowwise() += beta.value().row(0);
    return g.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv](Graph& gr, const Matrix& d) {
        const Matrix& xh = xhat.value();
        if (gr.tracks(gamma)) gr.accumulate(gamma, d.cwiseProduct(xh).colwise().sum());
        if (gr.tracks(beta)) gr.accumulate(beta, d.colwise().sum());
        if (gr.tracks(x)) {
            Matrix dxhat = d.array().rowwise() * gamma.value().row(0).array();
            gr.accumulate(x, normalize_rows_backward(dxhat, xh, inv));
        }
    });
}

// ---- shape ops ---------------------------------------------------------------

Var slice_cols(const Var& x, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > x.cols()) throw ArgumentError("slice_cols: out of range");
    Graph& g = *x.graph();
    Matrix out = x.value().middleCols(start, count);
    return g.record(std::move(out), {x}, [x, start, count](Graph& gr, const Matrix& d) {
        gr.grad_slot(x).middleCols(start, count) += d;
    });
}

Var repeat_rows(const Var& x, Index times) {
    Graph& g = *x.graph();
    const Index b = x.rows();
    Matrix out(b * times, x.cols());
    for (Index i = 0; i < b; ++i) out.middleRows(i * times, times).rowwise() = x.value().row(i);
    return g.record(std::move(out), {x}, [x, times](Graph& gr, const Matrix& d) {
        Matrix acc(x.rows(), x.cols());
        for (Index i = 0; i < x.rows(); ++i) acc.row(i) = d.middleRows(i * times, times).colwise().sum();
        gr.accumulate(x, acc);
    });
}

Var tile_rows(const Var& x, Index times) {
    Graph& g = *x.graph();
    const Index t = x.rows();
    Matrix out(t * times, x.cols());
    for (Index i = 0; i < times; ++i) out.middleRows(i * t, t) = x.value();
    return g.record(std::move(out), {x}, [x, times](Graph& gr, const Matrix& d) {
        const Index t = x.rows();
        Matrix acc = Matrix::Zero(t, x.cols());
        for (Index i = 0; i < times; ++i) acc += d.middleRows(i * t, t);
        gr.accumulate(x, acc);
    });
}

Var gather_rows(const Var& x, const std::vector<Index>& rows) {
    Graph& g = *x.graph();
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
    return g.record(std::move(out), {x}, [x, rows](Graph& gr, const Matrix& d) {
        Matrix& slot = gr.grad_slot(x);
        for (std::size_t i = 0; i < rows.size(); ++i) slot.row(rows[i]) += d.row(static_cast<Index>(i));
    });
}

Var gather_column(const Var& x, const std::vector<Index>& rows, Index col) {
    Graph& g = *x.graph();
    Matrix out(static_cast<Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i), 0) = x.value()(rows[i], col);
    return g.record(std::move(out), {x}, [x, rows, col](Graph& gr, const Matrix& d) {
        Matrix& slot = gr.grad_slot(x);
        for (std::size_t i = 0; i < rows.size(); ++i) slot(rows[i], col) += d(static_cast<Index>(i), 0);
    });
}

Var scatter_rows(const Var& x, const std::vector<Index>& rows, Index n_rows) {
    if (static_cast<Index>(rows.size()) != x.rows()) throw ArgumentError("scatter_rows: index count mismatch");
    Graph& g = *x.graph();
    Matrix out = Matrix::Zero(n_rows, x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) = x.value().row(static_cast<Index>(i));
    return g.record(std::move(out), {x}, [x, rows](Graph& gr, const Matrix& d) {
        Matrix acc(x.rows(), x.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) acc.row(static_cast<Index>(i)) = d.row(rows[i]);
        gr.accumulate(x, acc);
    });
}

Var mul_col(const Var& x, const Var& col) {
    if (col.cols() != 1 || col.rows() != x.rows()) throw ArgumentError("mul_col: column shape mismatch");
    Graph& g = *x.graph();
    Matrix out = x.value().array().colwise() * col.value().col(0).array();
    return g.record(std::move(out), {x, col}, [x, col](Graph& gr, const Matrix& d) {
        if (gr.tracks(x)) {
            Matrix dx = d.array().colwise() * col.value().col(0).array();
            gr.accumulate(x, dx);
        }
        if (gr.tracks(col)) gr.accumulate(col, d.cwiseProduct(x.value()).rowwise().sum());
    });
}

Var mean_pool(const Var& x, Index group) {
    if (group <= 0 || x.rows() % group != 0) throw ArgumentError("mean_pool: rows not divisible by group");
    Graph& g = *x.graph();
    const Index b = x.rows() / group;
    Matrix out(b, x.cols());
    for (Index i = 0; i < b; ++i) out.row(i) = x.value().middleRows(i * group, group).colwise().mean();
    return g.record(std::move(out), {x}, [x, group](Graph& gr, const Matrix& d) {
        Matrix acc(x.rows(), x.cols());
        const double inv = 1.0 / static_cast<double>(group);
        for (Index i = 0; i < d.rows(); ++i) acc.middleRows(i * group, group).rowwise() = d.row(i) * inv;
        gr.accumulate(x, acc);
    });
}

// ---- sequence ops ---------------------------------------------------------------

Var im2col_time(const Var& x, Index batch, Index kernel, Index dilation, bool causal) {
    if (batch <= 0 || x.rows() % batch != 0) throw ArgumentError("im2col_time: rows not divisible by batch");
    if (kernel < 1 || dilation < 1) throw ArgumentError("im2col_time: kernel and dilation must be >= 1");
    if (!causal && kernel % 2 == 0) throw ArgumentError("im2col_time: same padding needs an odd kernel");
    Graph& g = *x.graph();
    const Index len = x.rows() / batch;
    const Index c = x.cols();
    std::vector<Index> offsets(static_cast<std::size_t>(kernel));
    for (Index j = 0; j < kernel; ++j) {
        offsets[static_cast<std::size_t>(j)] = causal ? -(kernel - 1 - j) * dilation : (j - kernel / 2) * dilation;
    }
    Matrix out = Matrix::Zero(x.rows(), kernel * c);
    const Matrix& xv = x.value();
    for (Index b = 0; b < batch; ++b) {
        for (Index i = 0; i < len; ++i) {
            for (Index j = 0; j < kernel; ++j) {
                const Index src = i + offsets[static_cast<std::size_t>(j)];
                if (src < 0 || src >= len) continue;
                out.block(b * len + i, j * c, 1, c) = xv.row(b * len + src);
            }
        }
    }
    return g.record(std::move(out), {x}, [x, batch, len, c, offsets](Graph& gr, const Matrix& d) {
        Matrix& slot = gr.grad_slot(x);
        const Index kernel = static_cast<Index>(offsets.size());
        for (Index b = 0; b < batch; ++b) {
            for (Index i = 0; i < len; ++i) {
                for (Index j = 0; j < kernel; ++j) {
                    const Index src = i + offsets[static_cast<std::size_t>(j)];
                    if (src < 0 || src >= len) continue;
                    slot.row(b * len + src) += d.block(b * len + i, j * c, 1, c);
                }
            }
        }
    });
}

Var attention(const Var& q, const Var& k, const Var& v, Index batch, Index heads, std::vector<Matrix>* probs_out) {
    if (q.cols() != k.cols() || k.cols() != v.cols() || k.rows() != v.rows()) {
        throw ArgumentError("attention: q/k/v shape mismatch");
    }
    if (batch <= 0 || q.rows() % batch != 0 || k.rows() % batch != 0) {
        throw ArgumentError("attention: rows not divisible by batch");
    }
    if (heads <= 0 || q.cols() % heads != 0) throw ArgumentError("attention: width not divisible by heads");
    Graph& g = *q.graph();
    const Index lq = q.rows() / batch;
    const Index lk = k.rows() / batch;
    const Index hd = q.cols() / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(batch * heads));
    Matrix out(q.rows(), q.cols());
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const Matrix& vv = v.value();
    for (Index b = 0; b < batch; ++b) {
        for (Index h = 0; h < heads; ++h) {
            auto qb = qv.block(b * lq, h * hd, lq, hd);
            auto kb = kv.block(b * lk, h * hd, lk, hd);
            auto vb = vv.block(b * lk, h * hd, lk, hd);
            Matrix s = (qb * kb.transpose()) * inv_sqrt;
            for (Index i = 0; i < lq; ++i) {
                const double mx = s.row(i).maxCoeff();
                s.row(i) = (s.row(i).array() - mx).exp();
                s.row(i) /= s.row(i).sum();
            }
            out.block(b * lq, h * hd, lq, hd).noalias() = s * vb;
            (*probs)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
        }
    }
    if (probs_out) *probs_out = *probs;
    return g.record(std::move(out), {q, k, v}, [q, k, v, batch, heads, lq, lk, hd, inv_sqrt, probs](Graph& gr, const Matrix& d) {
        const bool tq = gr.tracks(q), tk = gr.tracks(k), tv = gr.tracks(v);
        Matrix* dq = tq ? &gr.grad_slot(q) : nullptr;
        Matrix* dk = tk ? &gr.grad_slot(k) : nullptr;
        Matrix* dv = tv ? &gr.grad_slot(v) : nullptr;
        const Matrix& qv = q.value();
        const Matrix& kv = k.value();
        const Matrix& vv = v.value();
        for (Index b = 0; b < batch; ++b) {
            for (Index h = 0; h < heads; ++h) {
                const Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
                auto dob = d.block(b * lq, h * hd, lq, hd);
                if (tv) dv->block(b * lk, h * hd, lk, hd).noalias() += p.transpose() * dob;
                if (!tq && !tk) continue;
                Matrix dp = dob * vv.block(b * lk, h * hd, lk, hd).transpose();
                Vector rs = dp.cwiseProduct(p).rowwise().sum();
                Matrix ds = p.cwiseProduct((dp.colwise() - rs).matrix()) * inv_sqrt;
                if (tq) dq->block(b * lq, h * hd, lq, hd).noalias() += ds * kv.block(b * lk, h * hd, lk, hd);
                if (tk) dk->block(b * lk, h * hd, lk, hd).noalias() += ds.transpose() * qv.block(b * lq, h * hd, lq, hd);
            }
        }
    });
}

// ---- losses ---------------------------------------------------------------------

namespace {
void require_target_shape(const Var& pred, const Matrix& t, const char* op) {
    if (pred.rows() != t.rows() || pred.cols() != t.cols()) throw ArgumentError(std::string(op) + ": shape mismatch");
}
}  // namespace

Var mse(const Var& pred, const Matrix& target) {
    require_target_shape(pred, target, "mse");
    Graph& g = *pred.graph();
    const double n = static_cast<double>(target.size());
    Matrix diff = pred.value() - target;
    Matrix out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    return g.record(std::move(out), {pred}, [pred, diff = std::move(diff), n](Graph& gr, const Matrix& d) {
        gr.accumulate(pred, diff * (2.0 * d(0, 0) / n));
    });
}

Var weighted_mse(const Var& pred, const Matrix& target, const Matrix& weights) {
    require_target_shape(pred, target, "weighted_mse");
    require_target_shape(pred, weights, "weighted_mse");
    Graph& g = *pred.graph();
    const double wsum = weights.sum();
    if (wsum <= 0.0) throw ArgumentError("weighted_mse: weights sum to zero");
    Matrix diff = pred.value() - target;
    Matrix out(1, 1);
    out(0, 0) = diff.cwiseProduct(diff).cwiseProduct(weights).sum() / wsum;
    Matrix wd = diff.cwiseProduct(weights);
    return g.record(std::move(out), {pred}, [pred, wd = std::move(wd), wsum](Graph& gr, const Matrix& d) {
        gr.accumulate(pred, wd * (2.0 * d(0, 0) / wsum));
    });
}

Var mae(const Var& pred, const Matrix& target) {
    require_target_shape(pred, target, "mae");
    return weighted_mae(pred, target, Matrix::Ones(target.rows(), target.cols()));
}

Var weighted_mae(const Var& pred, const Matrix& target, const Matrix& weights) {
    require_target_shape(pred, target, "weighted_mae");
    require_target_shape(pred, weights, "weighted_mae");
    Graph& g = *pred.graph();
    const double wsum = weights.sum();
    if (wsum <= 0.0) throw ArgumentError("weighted_mae: weights sum to zero");
    Matrix diff = pred.value() - target;
    Matrix out(1, 1);
    out(0, 0) = diff.cwiseAbs().cwiseProduct(weights).sum() / wsum;
    Matrix sgn = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }).cwiseProduct(weights);
    return g.record(std::move(out), {pred}, [pred, sgn = std::move(sgn), wsum](Graph& gr, const Matrix& d) {
        gr.accumulate(pred, sgn * (d(0, 0) / wsum));
    });
}

Var bce_with_logits(const Var& logits, const Matrix& labels) {
    require_target_shape(logits, labels, "bce_with_logits");
    Graph& g = *logits.graph();
    const double n = static_cast<double>(labels.size());
    const Matrix& z = logits.value();
    double total = 0.0;
    Matrix dz(z.rows(), z.cols());
    for (Index i = 0; i < z.size(); ++i) {
        const double zi = z.data()[i];
        const double yi = labels.data()[i];
        // log(1 + exp(-|z|)) + max(z, 0) - z*y
        total += std::log1p(std::exp(-std::abs(zi))) + std::max(zi, 0.0) - zi * yi;
        dz.data()[i] = 1.0 / (1.0 + std::exp(-zi)) - yi;
    }
    Matrix out(1, 1);
    out(0, 0) = total / n;
    return g.record(std::move(out), {logits}, [logits, dz = std::move(dz), n](Graph& gr, const Matrix& d) {
        gr.accumulate(logits, dz * (d(0, 0) / n));
    });
}

Var sum_all(const Var& a) {
    Graph& g = *a.graph();
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& d) {
        gr.accumulate(a, Matrix::Constant(a.rows(), a.cols(), d(0, 0)));
    });
}

}  // namespace pafm::ag
