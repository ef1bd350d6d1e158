#include "pafm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "pafm/errors.hpp"
#include "pafm/layers.hpp"
#include "pafm/trainer.hpp"

namespace pafm::metrics {

Index EvalPair::seq_len() const { return real.empty() ? 0 : real.front().values.rows(); }
Index EvalPair::n_features() const { return real.empty() ? 0 : real.front().values.cols(); }

void EvalPair::validate() const {
    if (real.empty() || synthetic.empty()) throw ArgumentError("metrics: real and synthetic sets must be non-empty");
    const Index tau = seq_len();
    const Index d = n_features();
    for (const Windows* set : {&real, &synthetic}) {
        for (const auto& w : *set) {
            if (w.values.rows() != tau || w.values.cols() != d) {
                throw ArgumentError("metrics: all windows must be " + std::to_string(tau) + "x" + std::to_string(d));
            }
        }
    }
}

Score summarize(std::vector<double> runs) {
    Score s;
    if (runs.empty()) return s;
    s.mean = std::accumulate(runs.begin(), runs.end(), 0.0) / static_cast<double>(runs.size());
    double var = 0.0;
    for (double r : runs) var += (r - s.mean) * (r - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(runs.size()));
    s.runs = std::move(runs);
    return s;
}

// ---- GRU -------------------------------------------------------------------------------

GruNet::GruNet(Index in_features, int hidden, int layers, Index out_features, std::uint64_t seed)
    : in_(in_features), hidden_(hidden), layers_(layers) {
    if (hidden < 1 || layers < 1) throw ArgumentError("GRU: hidden and layers must be >= 1");
    Rng rng(seed);
    const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> u(-a, a);
    auto uniform = [&](Index r, Index c) {
        Matrix m(r, c);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
        return m;
    };
    for (int l = 0; l < layers; ++l) {
        const std::string p = "gru." + std::to_string(l);
        const Index in = l == 0 ? in_features : hidden;
        params_.add(p + ".ih.weight", uniform(in, 3 * hidden));
        params_.add(p + ".ih.bias", uniform(1, 3 * hidden));
        params_.add(p + ".hh.weight", uniform(hidden, 3 * hidden));
        params_.add(p + ".hh.bias", uniform(1, 3 * hidden));
    }
    layers::add_linear(params_, "head", hidden, out_features, rng);
}

std::vector<ag::Var> GruNet::run(ag::Graph& g, const std::vector<Matrix>& steps) const {
    if (steps.empty()) throw ArgumentError("GRU: empty sequence");
    const Index b = steps.front().rows();
    const Index h = hidden_;
    std::vector<ag::Var> inputs;
    for (const Matrix& s : steps) {
        if (s.cols() != in_) throw ArgumentError("GRU: input width mismatch");
        inputs.push_back(g.constant(s));
    }
    for (int l = 0; l < layers_; ++l) {
        const std::string p = "gru." + std::to_string(l);
        ag::Var state = g.constant(Matrix::Zero(b, h));
        std::vector<ag::Var> outputs;
        outputs.reserve(inputs.size());
        for (const ag::Var& x : inputs) {
            ag::Var gi = layers::linear(g, x, params_, p + ".ih");
            ag::Var gh = layers::linear(g, state, params_, p + ".hh");
            ag::Var r = ag::sigmoid(ag::add(ag::slice_cols(gi, 0, h), ag::slice_cols(gh, 0, h)));
            ag::Var z = ag::sigmoid(ag::add(ag::slice_cols(gi, h, h), ag::slice_cols(gh, h, h)));
            ag::Var n = ag::tanh(ag::add(ag::slice_cols(gi, 2 * h, h), ag::mul(r, ag::slice_cols(gh, 2 * h, h))));
            state = ag::add(ag::mul(ag::affine(z, -1.0, 1.0), n), ag::mul(z, state));
            outputs.push_back(state);
        }
        inputs = std::move(outputs);
    }
    return inputs;
}

ag::Var GruNet::head(ag::Graph& g, const ag::Var& h) const { return layers::linear(g, h, params_, "head"); }

std::vector<Matrix> time_steps(const Windows& windows, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw ArgumentError("time_steps: empty batch");
    const Index tau = windows[idx.front()].values.rows();
    const Index d = windows[idx.front()].values.cols();
    std::vector<Matrix> steps(static_cast<std::size_t>(tau), Matrix(static_cast<Index>(idx.size()), d));
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const Matrix& w = windows[idx[b]].values;
        for (Index t = 0; t < tau; ++t) steps[static_cast<std::size_t>(t)].row(static_cast<Index>(b)) = w.row(t);
    }
    return steps;
}

namespace {

std::vector<std::size_t> iota_n(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

std::map<std::string, Matrix> snapshot(const ag::ParameterStore& s) {
    std::map<std::string, Matrix> out;
    for (const auto& [name, p] : s.items()) out.emplace(name, p.value);
    return out;
}

void restore(ag::ParameterStore& s, const std::map<std::string, Matrix>& snap) {
    for (auto& [name, p] : s.items()) p.value = snap.at(name);
}

// Minibatch Adam with early stopping on `val_loss`; leaves the best parameters in place.
template <typename BatchLoss, typename ValLoss>
void fit(ag::ParameterStore& params, const GruOptions& opts, std::size_t n_train, Rng& rng, BatchLoss batch_loss,
         ValLoss val_loss) {
    train::Adam adam(params);
    std::uniform_int_distribution<std::size_t> pick(0, n_train - 1);
    double best = std::numeric_limits<double>::infinity();
    auto best_params = snapshot(params);
    long since_best = 0;
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size), n_train);
    for (long step = 1; step <= opts.max_steps; ++step) {
        std::vector<std::size_t> idx(bs);
        for (auto& i : idx) i = pick(rng);
        ag::Graph g;
        ag::Var loss = batch_loss(g, idx);
        if (!std::isfinite(loss.value()(0, 0))) throw NumericError("metric model training diverged");
        params.zero_grad();
        g.backward(loss);
        train::clip_grad_norm(params, 1.0);
        adam.step(params, opts.lr);
        if (step % opts.eval_every == 0 || step == opts.max_steps) {
            const double v = val_loss();
            if (v < best) {
                best = v;
                best_params = snapshot(params);
                since_best = 0;
            } else if (++since_best >= opts.patience) {
                break;
            }
        }
    }
    restore(params, best_params);
}

struct Labeled {
    Windows windows;
    Matrix labels;  // n x 1
};

Labeled labeled(const Windows& real, const std::vector<std::size_t>& ri, const Windows& synth,
                const std::vector<std::size_t>& si) {
    Labeled out;
    out.labels.resize(static_cast<Index>(ri.size() + si.size()), 1);
    Index k = 0;
    for (std::size_t i : ri) {
        out.windows.push_back(real[i]);
        out.labels(k++, 0) = 1.0;
    }
    for (std::size_t i : si) {
        out.windows.push_back(synth[i]);
        out.labels(k++, 0) = 0.0;
    }
    return out;
}

Matrix gather_labels(const Matrix& labels, const std::vector<std::size_t>& idx) {
    Matrix out(static_cast<Index>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i), 0) = labels(static_cast<Index>(idx[i]), 0);
    return out;
}

int hidden_of(const GruOptions& opts, Index d) { return opts.hidden > 0 ? opts.hidden : static_cast<int>(d); }

}  // namespace

double discriminative_run(const EvalPair& pair, std::uint64_t seed, const GruOptions& opts) {
    pair.validate();
    if (pair.real.size() < 20 || pair.synthetic.size() < 20) {
        throw ArgumentError("discriminative score needs at least 20 windows per set");
    }
    Rng rng(seed);
    auto split = [&](std::size_t n) {
        std::vector<std::size_t> idx = iota_n(n);
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n_test = std::max<std::size_t>(1, n / 5);
        const std::size_t n_val = std::max<std::size_t>(1, (n - n_test) / 10);
        std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<long>(n_test));
        std::vector<std::size_t> val(idx.begin() + static_cast<long>(n_test),
                                     idx.begin() + static_cast<long>(n_test + n_val));
        std::vector<std::size_t> train(idx.begin() + static_cast<long>(n_test + n_val), idx.end());
        return std::array<std::vector<std::size_t>, 3>{train, val, test};
    };
    const auto rs = split(pair.real.size());
    const auto ss = split(pair.synthetic.size());
    const Labeled train = labeled(pair.real, rs[0], pair.synthetic, ss[0]);
    const Labeled val = labeled(pair.real, rs[1], pair.synthetic, ss[1]);
    const Labeled test = labeled(pair.real, rs[2], pair.synthetic, ss[2]);

    const Index d = pair.n_features();
    GruNet net(d, hidden_of(opts, d), opts.layers, 1, derive_seed(seed, 0x9e7));
    auto logits = [&](ag::Graph& g, const Labeled& set, const std::vector<std::size_t>& idx) {
        return net.head(g, net.run(g, time_steps(set.windows, idx)).back());
    };
    const std::vector<std::size_t> val_all = iota_n(val.windows.size());
    fit(
        net.params(), opts, train.windows.size(), rng,
        [&](ag::Graph& g, const std::vector<std::size_t>& idx) {
            return ag::bce_with_logits(logits(g, train, idx), gather_labels(train.labels, idx));
        },
        [&]() {
            ag::Graph g(false);
            return ag::bce_with_logits(logits(g, val, val_all), val.labels).value()(0, 0);
        });

    ag::Graph g(false);
    const Matrix out = logits(g, test, iota_n(test.windows.size())).value();
    long correct = 0;
    for (Index i = 0; i < out.rows(); ++i) correct += (out(i, 0) > 0.0) == (test.labels(i, 0) > 0.5);
    const double acc = static_cast<double>(correct) / static_cast<double>(out.rows());
    return std::abs(acc - 0.5);
}

Score discriminative_score(const EvalPair& pair, long n_runs, std::uint64_t seed, const GruOptions& opts) {
    std::vector<double> runs;
    for (long r = 0; r < n_runs; ++r) runs.push_back(discriminative_run(pair, derive_seed(seed, 0xd15c, r), opts));
    return summarize(std::move(runs));
}

namespace {

// Mean over steps 0..tau-2 of the loss between head(h_t) and x_{t+1}.
template <typename Loss>
ag::Var next_step_loss(ag::Graph& g, const GruNet& net, const std::vector<ag::Var>& hs, const std::vector<Matrix>& steps,
                       Loss loss) {
    ag::Var total;
    for (std::size_t t = 0; t + 1 < steps.size(); ++t) {
        ag::Var l = loss(net.head(g, hs[t]), steps[t + 1]);
        total = total.valid() ? ag::add(total, l) : l;
    }
    return ag::scale(total, 1.0 / static_cast<double>(steps.size() - 1));
}

}  // namespace

double predictive_run(const EvalPair& pair, std::uint64_t seed, const GruOptions& opts) {
    pair.validate();
    if (pair.seq_len() < 2) throw ArgumentError("predictive score needs windows of length >= 2");
    if (pair.synthetic.size() < 2) throw ArgumentError("predictive score needs at least 2 synthetic windows");
    Rng rng(seed);
    std::vector<std::size_t> idx = iota_n(pair.synthetic.size());
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_val = std::max<std::size_t>(1, idx.size() / 10);
    const std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<long>(n_val));
    const std::vector<std::size_t> train(idx.begin() + static_cast<long>(n_val), idx.end());

    const Index d = pair.n_features();
    GruNet net(d, hidden_of(opts, d), opts.layers, d, derive_seed(seed, 0x97ed));
    auto mse = [](const ag::Var& p, const Matrix& y) { return ag::mse(p, y); };
    auto mae = [](const ag::Var& p, const Matrix& y) { return ag::mae(p, y); };
    const std::vector<Matrix> val_steps = time_steps(pair.synthetic, val);
    fit(
        net.params(), opts, train.size(), rng,
        [&](ag::Graph& g, const std::vector<std::size_t>& picks) {
            std::vector<std::size_t> rows(picks.size());
            for (std::size_t i = 0; i < picks.size(); ++i) rows[i] = train[picks[i]];
            const std::vector<Matrix> steps = time_steps(pair.synthetic, rows);
            return next_step_loss(g, net, net.run(g, steps), steps, mse);
        },
        [&]() {
            ag::Graph g(false);
            return next_step_loss(g, net, net.run(g, val_steps), val_steps, mse).value()(0, 0);
        });

    const std::vector<Matrix> real_steps = time_steps(pair.real, iota_n(pair.real.size()));
    ag::Graph g(false);
    return next_step_loss(g, net, net.run(g, real_steps), real_steps, mae).value()(0, 0);
}

Score predictive_score(const EvalPair& pair, long n_runs, std::uint64_t seed, const GruOptions& opts) {
    std::vector<double> runs;
    for (long r = 0; r < n_runs; ++r) runs.push_back(predictive_run(pair, derive_seed(seed, 0x94ed, r), opts));
    return summarize(std::move(runs));
}

// ---- feature encoder ---------------------------------------------------------------------

FeatureEncoder::FeatureEncoder(Index seq_len, Index n_features, EncoderOptions opts, std::uint64_t seed)
    : seq_len_(seq_len), n_features_(n_features), opts_(std::move(opts)) {
    if (opts_.dilations.empty()) throw ArgumentError("encoder: need at least one layer");
    Rng rng(seed);
    for (std::size_t l = 0; l < opts_.dilations.size(); ++l) {
        layers::add_conv1d(params_, "conv." + std::to_string(l), l == 0 ? n_features : opts_.dim, opts_.dim,
                           opts_.kernel, rng);
    }
    layers::add_linear(params_, "head", opts_.dim, n_features, rng);
}

ag::Var FeatureEncoder::hidden(ag::Graph& g, const ag::Var& x, Index batch) const {
    ag::Var h;
    for (std::size_t l = 0; l < opts_.dilations.size(); ++l) {
        ag::Var c = ag::gelu(layers::conv1d(g, l == 0 ? x : h, params_, "conv." + std::to_string(l), batch,
                                            opts_.kernel, opts_.dilations[l], /*causal=*/true));
        h = l == 0 ? c : ag::add(h, c);
    }
    return h;
}

ag::Var FeatureEncoder::predict(ag::Graph& g, const ag::Var& h) const { return layers::linear(g, h, params_, "head"); }

namespace {

Matrix stack(const Windows& windows, const std::vector<std::size_t>& idx) {
    const Index tau = windows[idx.front()].values.rows();
    Matrix x(static_cast<Index>(idx.size()) * tau, windows[idx.front()].values.cols());
    for (std::size_t b = 0; b < idx.size(); ++b) x.middleRows(static_cast<Index>(b) * tau, tau) = windows[idx[b]].values;
    return x;
}

}  // namespace

Matrix FeatureEncoder::encode(const Windows& windows) const {
    if (windows.empty()) return Matrix(0, opts_.dim);
    Matrix out(static_cast<Index>(windows.size()), opts_.dim);
    const std::size_t chunk = 512;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const std::size_t n = std::min(chunk, windows.size() - start);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), start);
        for (std::size_t i : idx) {
            if (windows[i].values.rows() != seq_len_ || windows[i].values.cols() != n_features_) {
                throw ArgumentError("encoder: window shape does not match the encoder");
            }
        }
        ag::Graph g(false);
        const Index b = static_cast<Index>(n);
        out.middleRows(static_cast<Index>(start), b) = ag::mean_pool(hidden(g, g.constant(stack(windows, idx)), b), seq_len_).value();
    }
    return out;
}

FeatureEncoder train_feature_encoder(const Windows& real, const EncoderOptions& opts, std::uint64_t seed) {
    if (real.size() < 100) throw ArgumentError("feature encoder needs at least 100 real windows");
    const Index tau = real.front().values.rows();
    const Index d = real.front().values.cols();
    FeatureEncoder enc(tau, d, opts, derive_seed(seed, 0xe4c));
    Rng rng(derive_seed(seed, 0xe4d));
    std::uniform_int_distribution<std::size_t> pick(0, real.size() - 1);
    train::Adam adam(enc.params());
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size), real.size());

    // Row (b, t) predicts x(b, t + 1); the last step of each window has no target.
    Matrix weight = Matrix::Ones(static_cast<Index>(bs) * tau, d);
    for (std::size_t b = 0; b < bs; ++b) weight.row(static_cast<Index>(b) * tau + tau - 1).setZero();

    for (long step = 0; step < opts.steps; ++step) {
        std::vector<std::size_t> idx(bs);
        for (auto& i : idx) i = pick(rng);
        const Matrix x = stack(real, idx);
        Matrix target = Matrix::Zero(x.rows(), d);
        for (std::size_t b = 0; b < bs; ++b) {
            target.middleRows(static_cast<Index>(b) * tau, tau - 1) = x.middleRows(static_cast<Index>(b) * tau + 1, tau - 1);
        }
        ag::Graph g;
        ag::Var loss = ag::weighted_mse(enc.predict(g, enc.hidden(g, g.constant(x), static_cast<Index>(bs))), target, weight);
        if (!std::isfinite(loss.value()(0, 0))) throw NumericError("feature encoder training diverged");
        enc.params().zero_grad();
        g.backward(loss);
        train::clip_grad_norm(enc.params(), 1.0);
        adam.step(enc.params(), opts.lr);
    }
    return enc;
}

// ---- Frechet distance -------------------------------------------------------------------------

namespace {

Matrix covariance(const Matrix& x, RowVector& mean) {
    mean = x.colwise().mean();
    const Matrix c = x.rowwise() - mean;
    return (c.transpose() * c) / static_cast<double>(std::max<Index>(1, x.rows() - 1));
}

// Symmetric PSD square root through an eigendecomposition.
Matrix psd_sqrt(const Matrix& s, const char* what) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.info() != Eigen::Success) throw NumericError(std::string("frechet: eigendecomposition failed for ") + what);
    Vector ev = es.eigenvalues();
    const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -tol) throw NumericError(std::string("frechet: ") + what + " is not positive semi-definite");
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Matrix& a, const Matrix& b, double ridge) {
    if (a.cols() != b.cols()) throw ArgumentError("frechet: feature dimensions differ");
    if (a.rows() < 2 || b.rows() < 2) throw ArgumentError("frechet: need at least 2 observations per set");
    RowVector ma, mb;
    Matrix sa = covariance(a, ma);
    Matrix sb = covariance(b, mb);
    sa.diagonal().array() += ridge;
    sb.diagonal().array() += ridge;
    const Matrix ra = psd_sqrt(sa, "first covariance");
    Matrix inner = ra * sb * ra;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(inner, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("frechet: eigendecomposition of the covariance product failed");
    const Vector ev = es.eigenvalues();
    const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -tol) throw NumericError("frechet: covariance product is not positive semi-definite");
    const double tr_sqrt = ev.cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, d);
}

double context_fid(const EvalPair& pair, const FeatureEncoder& encoder) {
    pair.validate();
    return frechet_distance(encoder.encode(pair.real), encoder.encode(pair.synthetic));
}

Score context_fid_score(const EvalPair& pair, long n_runs, std::uint64_t seed, const EncoderOptions& opts) {
    std::vector<double> runs;
    for (long r = 0; r < n_runs; ++r) {
        const FeatureEncoder enc = train_feature_encoder(pair.real, opts, derive_seed(seed, 0xc1d, r));
        runs.push_back(context_fid(pair, enc));
    }
    return summarize(std::move(runs));
}

// ---- correlational ------------------------------------------------------------------------------

Matrix pool_time(const Windows& windows) {
    if (windows.empty()) throw ArgumentError("pool_time: no windows");
    return stack(windows, iota_n(windows.size()));
}

namespace {
constexpr double kDegenerateVar = 1e-20;
}

Matrix correlation_matrix(const Matrix& pooled, std::vector<Index>* degenerate) {
    RowVector mean;
    const Matrix cov = covariance(pooled, mean);
    const Index d = cov.rows();
    const Vector var = cov.diagonal();
    Matrix corr = Matrix::Zero(d, d);
    if (degenerate) degenerate->clear();
    for (Index i = 0; i < d; ++i) {
        if (var(i) <= kDegenerateVar && degenerate) degenerate->push_back(i);
    }
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j < d; ++j) {
            if (var(i) <= kDegenerateVar || var(j) <= kDegenerateVar) continue;
            corr(i, j) = std::clamp(cov(i, j) / std::sqrt(var(i) * var(j)), -1.0, 1.0);
        }
    }
    return corr;
}

CorrelationalResult correlational_score(const EvalPair& pair) {
    pair.validate();
    CorrelationalResult res;
    const Matrix cr = correlation_matrix(pool_time(pair.real), &res.degenerate_real);
    const Matrix cs = correlation_matrix(pool_time(pair.synthetic), &res.degenerate_synthetic);
    const Index d = cr.rows();
    std::vector<bool> dr(static_cast<std::size_t>(d), false), ds(static_cast<std::size_t>(d), false);
    for (Index i : res.degenerate_real) dr[static_cast<std::size_t>(i)] = true;
    for (Index i : res.degenerate_synthetic) ds[static_cast<std::size_t>(i)] = true;

    Matrix diff = (cr - cs).cwiseAbs();
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j < d; ++j) {
            const bool deg_r = dr[static_cast<std::size_t>(i)] || dr[static_cast<std::size_t>(j)];
            const bool deg_s = ds[static_cast<std::size_t>(i)] || ds[static_cast<std::size_t>(j)];
            if (deg_r && deg_s) diff(i, j) = 0.0;
            else if (deg_r || deg_s) diff(i, j) = 1.0;
        }
    }
    res.score = diff.sum() / static_cast<double>(d * d);
    return res;
}

// ---- PCA / histograms -----------------------------------------------------------------------------

Matrix flatten(const Windows& windows) {
    if (windows.empty()) throw ArgumentError("flatten: no windows");
    const Index n = windows.front().values.size();
    Matrix out(static_cast<Index>(windows.size()), n);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        out.row(static_cast<Index>(i)) = Eigen::Map<const RowVector>(windows[i].values.data(), n);
    }
    return out;
}

Pca fit_pca(const Matrix& rows, Index n_components) {
    if (rows.rows() < 3) throw ArgumentError("PCA needs at least 3 samples");
    if (n_components < 1 || n_components > rows.cols()) throw ArgumentError("PCA: n_components out of range");
    Pca p;
    const Matrix cov = covariance(rows, p.mean);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("PCA: eigendecomposition failed");
    const Index dim = cov.rows();
    p.components.resize(n_components, dim);
    p.variance.resize(n_components);
    for (Index k = 0; k < n_components; ++k) {
        const Index src = dim - 1 - k;  // eigenvalues come in increasing order
        p.components.row(k) = es.eigenvectors().col(src).transpose();
        p.variance(k) = std::max(0.0, es.eigenvalues()(src));
    }
    return p;
}

Matrix pca_project(const Pca& pca, const Matrix& rows) { return (rows.rowwise() - pca.mean) * pca.components.transpose(); }

Matrix pca_reconstruct(const Pca& pca, const Matrix& scores) {
    return (scores * pca.components).rowwise() + pca.mean;
}

void write_pca_csv(const std::filesystem::path& path, const EvalPair& pair, Index n_components) {
    pair.validate();
    const Matrix real = flatten(pair.real);
    const Pca pca = fit_pca(real, n_components);
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write PCA export: " + path.string());
    out << "set";
    for (Index k = 0; k < n_components; ++k) out << ",pc" << k + 1;
    out << '\n' << std::setprecision(10);
    auto emit = [&](const char* name, const Matrix& proj) {
        for (Index i = 0; i < proj.rows(); ++i) {
            out << name;
            for (Index k = 0; k < proj.cols(); ++k) out << ',' << proj(i, k);
            out << '\n';
        }
    };
    emit("real", pca_project(pca, real));
    emit("synthetic", pca_project(pca, flatten(pair.synthetic)));
}

std::vector<Histogram> value_histograms(const EvalPair& pair, int bins) {
    pair.validate();
    if (bins < 1) throw ArgumentError("histogram: bins must be >= 1");
    const Matrix r = pool_time(pair.real);
    const Matrix s = pool_time(pair.synthetic);
    std::vector<Histogram> out;
    for (Index j = 0; j < r.cols(); ++j) {
        Histogram h;
        h.feature = j;
        h.lo = std::min(r.col(j).minCoeff(), s.col(j).minCoeff());
        h.hi = std::max(r.col(j).maxCoeff(), s.col(j).maxCoeff());
        if (h.hi <= h.lo) h.hi = h.lo + 1.0;
        h.real.assign(static_cast<std::size_t>(bins), 0);
        h.synthetic.assign(static_cast<std::size_t>(bins), 0);
        auto bin_of = [&](double v) {
            const auto b = static_cast<long>((v - h.lo) / (h.hi - h.lo) * bins);
            return static_cast<std::size_t>(std::clamp<long>(b, 0, bins - 1));
        };
        for (Index i = 0; i < r.rows(); ++i) ++h.real[bin_of(r(i, j))];
        for (Index i = 0; i < s.rows(); ++i) ++h.synthetic[bin_of(s(i, j))];
        out.push_back(std::move(h));
    }
    return out;
}

void write_histograms_csv(const std::filesystem::path& path, const std::vector<Histogram>& hists) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write histogram export: " + path.string());
    out << "feature,bin_lo,bin_hi,real,synthetic\n" << std::setprecision(10);
    for (const auto& h : hists) {
        const double w = (h.hi - h.lo) / static_cast<double>(h.real.size());
        for (std::size_t b = 0; b < h.real.size(); ++b) {
            out << h.feature << ',' << h.lo + w * static_cast<double>(b) << ',' << h.lo + w * static_cast<double>(b + 1)
                << ',' << h.real[b] << ',' << h.synthetic[b] << '\n';
        }
    }
}

// ---- combined ----------------------------------------------------------------------------------------

MetricReport evaluate(const EvalPair& pair, const config::EvalConfig& cfg) {
    cfg.validate();
    pair.validate();
    MetricReport rep;
    rep.n_runs = cfg.n_runs;
    GruOptions gru;
    gru.max_steps = cfg.max_steps;
    rep.discriminative = discriminative_score(pair, cfg.n_runs, derive_seed(cfg.seed, 1), gru);
    rep.predictive = predictive_score(pair, cfg.n_runs, derive_seed(cfg.seed, 2), gru);
    EncoderOptions enc;
    enc.steps = cfg.encoder_steps;
    rep.context_fid = context_fid_score(pair, cfg.n_runs, derive_seed(cfg.seed, 3), enc);

    const CorrelationalResult corr = correlational_score(pair);
    rep.correlational = summarize(std::vector<double>(static_cast<std::size_t>(cfg.n_runs), corr.score));
    auto warn = [&](const char* set, const std::vector<Index>& feats) {
        for (Index f : feats) {
            rep.warnings.push_back(std::string("feature ") + std::to_string(f) + " has zero variance in the " + set +
                                   " set; its correlations are scored by the degenerate-feature rule");
        }
    };
    warn("real", corr.degenerate_real);
    warn("synthetic", corr.degenerate_synthetic);
    return rep;
}

}  // namespace pafm::metrics
