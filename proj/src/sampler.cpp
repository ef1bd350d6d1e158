#include "pafm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pafm/errors.hpp"

namespace pafm::sample {

Matrix Field::guided_velocity(const Matrix& x, const Matrix& offset, double t, double alpha, const Matrix& weight,
                              const Matrix& target, Matrix& grad) const {
    Matrix v = velocity(x, offset, t, alpha);
    grad = 2.0 * weight.cwiseProduct(x + (1.0 - t) * v - target);
    return v;
}

NetField::NetField(net::VelocityNet net) : net_(std::move(net)) {}

namespace {

std::vector<double> times_for(Index rows, Index seq_len, double t) {
    if (rows == 0 || rows % seq_len != 0) throw ArgumentError("sampler: state rows must be a multiple of seq_len");
    return std::vector<double>(static_cast<std::size_t>(rows / seq_len), t);
}

}  // namespace

Matrix NetField::velocity(const Matrix& x, const Matrix& offset, double t, double alpha) const {
    return net_.dual_path_forward(x, x + offset, times_for(x.rows(), seq_len(), t), alpha).v_final;
}

Matrix NetField::guided_velocity(const Matrix& x, const Matrix& offset, double t, double alpha, const Matrix& weight,
                                 const Matrix& target, Matrix& grad) const {
    ag::Graph g;
    g.set_param_tracking(false);
    ag::Var xin = g.input(x);
    ag::Var xp = ag::add(xin, g.constant(offset));
    net::PathVars pv = net_.forward(g, xin, xp, times_for(x.rows(), seq_len(), t), alpha);
    ag::Var miss = ag::sub(ag::add(xin, ag::scale(pv.v_final, 1.0 - t)), g.constant(target));
    g.backward(ag::sum_all(ag::mul(ag::mul(miss, miss), g.constant(weight))));
    grad = xin.grad();
    if (grad.size() == 0) grad = Matrix::Zero(x.rows(), x.cols());
    return pv.v_final.value();
}

StubField::StubField(flow::VelocityField f, Index seq_len, Index n_features)
    : f_(std::move(f)), seq_len_(seq_len), n_features_(n_features) {}

Matrix StubField::velocity(const Matrix& x, const Matrix& offset, double t, double alpha) const {
    Matrix v = f_(x, t);
    if (alpha == 0.0 || offset.isZero(0.0)) return v;
    return v + alpha * (f_(x + offset, t) - v);
}

std::unique_ptr<Field> field_from_checkpoint(const train::Checkpoint& ckpt) {
    return std::make_unique<NetField>(train::make_net(ckpt));
}

namespace {

// Every sample owns its noise stream, so results do not depend on chunking.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, 0x5a4d, index); }

Matrix draw_stacked(std::vector<Rng>& rngs, Index seq_len, Index d) {
    Matrix m(static_cast<Index>(rngs.size()) * seq_len, d);
    for (std::size_t i = 0; i < rngs.size(); ++i) {
        m.middleRows(static_cast<Index>(i) * seq_len, seq_len) = normal_matrix(seq_len, d, rngs[i]);
    }
    return m;
}

// Euler integration of the samples [first, first + b). With `weight` non-empty
// the entries where weight == 1 are pinned to the path (1 - t) z + t * target,
// z being the initial noise.
Matrix integrate(const Field& field, std::size_t first, Index b, const SamplerConfig& cfg, const Matrix& weight,
                 const Matrix& target) {
    const Index tau = field.seq_len();
    const Index d = field.n_features();
    const Index rows = b * tau;
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(b));
    for (Index i = 0; i < b; ++i) rngs.emplace_back(sample_seed(cfg.seed, first + static_cast<std::size_t>(i)));
    const Matrix z = draw_stacked(rngs, tau, d);
    Matrix x = z;
    const bool conditioned = weight.size() != 0 && (weight.array() != 0.0).any();
    const bool guided = conditioned && cfg.guidance_weight > 0.0;
    const long T = cfg.n_steps;
    const double dt = 1.0 / static_cast<double>(T);

    Matrix grad;
    for (long i = 0; i < T; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(T);
        const Matrix eps = draw_stacked(rngs, tau, d);
        const Matrix offset = cfg.sigma == 0.0 ? Matrix::Zero(rows, d) : Matrix(cfg.sigma * eps);
        Matrix v = guided ? field.guided_velocity(x, offset, t, cfg.alpha, weight, target, grad)
                          : field.velocity(x, offset, t, cfg.alpha);
        x += dt * v;
        if (guided) x -= cfg.guidance_weight * grad;
        if (conditioned) {
            const double tn = i + 1 == T ? 1.0 : static_cast<double>(i + 1) / static_cast<double>(T);
            for (Index k = 0; k < x.size(); ++k) {
                if (weight.data()[k] == 0.0) continue;
                x.data()[k] = tn == 1.0 ? target.data()[k] : (1.0 - tn) * z.data()[k] + tn * target.data()[k];
            }
        }
        if (!x.allFinite()) throw NumericError("sampler: non-finite state at step " + std::to_string(i + 1));
    }
    return x;
}

std::vector<Matrix> unstack(const Matrix& x, Index seq_len) {
    std::vector<Matrix> out;
    for (Index r = 0; r < x.rows(); r += seq_len) out.emplace_back(x.middleRows(r, seq_len));
    return out;
}

}  // namespace

std::vector<Matrix> sample_unconditional(const Field& field, long n, const SamplerConfig& cfg) {
    cfg.validate();
    if (n < 1) throw ArgumentError("sample_unconditional: n must be >= 1");
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long start = 0; start < n; start += cfg.batch_size) {
        const Index b = std::min<long>(cfg.batch_size, n - start);
        for (auto& m : unstack(integrate(field, static_cast<std::size_t>(start), b, cfg, Matrix(), Matrix()), field.seq_len())) {
            out.push_back(std::move(m));
        }
    }
    return out;
}

std::vector<Matrix> sample_unconditional(const train::Checkpoint& ckpt, long n, const SamplerConfig& cfg) {
    return sample_unconditional(*field_from_checkpoint(ckpt), n, cfg);
}

std::vector<Matrix> sample_conditional(const Field& field, const std::vector<ConditionSpec>& conds,
                                       const SamplerConfig& cfg) {
    cfg.validate();
    const Index tau = field.seq_len();
    const Index d = field.n_features();
    for (const auto& c : conds) {
        if (c.observed_mask.rows() != tau || c.observed_mask.cols() != d || c.observed_values.rows() != tau ||
            c.observed_values.cols() != d) {
            throw ArgumentError("sample_conditional: mask and values must both be " + std::to_string(tau) + "x" +
                                std::to_string(d));
        }
        for (Index k = 0; k < c.observed_mask.size(); ++k) {
            if (c.observed_mask.data()[k] && !std::isfinite(c.observed_values.data()[k])) {
                throw ArgumentError("sample_conditional: observed value is non-finite");
            }
        }
    }

    std::vector<Matrix> out;
    out.reserve(conds.size());
    const long n = static_cast<long>(conds.size());
    for (long start = 0; start < n; start += cfg.batch_size) {
        const Index b = std::min<long>(cfg.batch_size, n - start);
        Matrix weight = Matrix::Zero(b * tau, d);
        Matrix target = Matrix::Zero(b * tau, d);
        for (Index i = 0; i < b; ++i) {
            const ConditionSpec& c = conds[static_cast<std::size_t>(start + i)];
            weight.middleRows(i * tau, tau) = c.observed_mask.cast<double>().matrix();
            target.middleRows(i * tau, tau) = c.observed_mask.select(c.observed_values.array(), 0.0).matrix();
        }
        Matrix x = integrate(field, static_cast<std::size_t>(start), b, cfg, weight, target);
        for (Index i = 0; i < b; ++i) {
            const ConditionSpec& c = conds[static_cast<std::size_t>(start + i)];
            if (c.observed_mask.all()) {
                out.push_back(c.observed_values);
            } else {
                out.emplace_back(x.middleRows(i * tau, tau));
            }
        }
    }
    return out;
}

Matrix sample_conditional(const Field& field, const ConditionSpec& cond, const SamplerConfig& cfg) {
    return sample_conditional(field, std::vector<ConditionSpec>{cond}, cfg).front();
}

Mask random_missing_mask(Index rows, Index cols, double missing_ratio, std::uint64_t seed) {
    if (!(missing_ratio > 0.0 && missing_ratio < 1.0)) throw ArgumentError("missing ratio must be in (0, 1)");
    const Index total = rows * cols;
    // The small slack keeps products like 0.1 * 120 from rounding up past the integer.
    const Index n_missing = static_cast<Index>(std::ceil(missing_ratio * static_cast<double>(total) - 1e-9));
    std::vector<Index> cells(static_cast<std::size_t>(total));
    std::iota(cells.begin(), cells.end(), Index{0});
    Rng rng(derive_seed(seed, 0x3a5c));
    std::shuffle(cells.begin(), cells.end(), rng);
    Mask observed = Mask::Constant(rows, cols, true);
    for (Index k = 0; k < n_missing; ++k) observed.data()[cells[static_cast<std::size_t>(k)]] = false;
    return observed;
}

Mask horizon_mask(Index rows, Index cols, long horizon) {
    if (horizon < 1 || horizon >= rows) throw ArgumentError("horizon must be in [1, seq_len)");
    Mask observed = Mask::Constant(rows, cols, true);
    observed.bottomRows(horizon).setConstant(false);
    return observed;
}

std::vector<TaskResult> complete(const Field& field, const std::vector<data::TimeSeriesWindow>& windows,
                                 const std::vector<Mask>& observed, const SamplerConfig& cfg) {
    if (windows.size() != observed.size()) throw ArgumentError("complete: one mask per window required");
    std::vector<ConditionSpec> conds;
    conds.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) conds.push_back({observed[i], windows[i].values});
    std::vector<Matrix> outs = sample_conditional(field, conds, cfg);

    std::vector<TaskResult> res(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        TaskResult& r = res[i];
        r.output = std::move(outs[i]);
        r.observed = observed[i];
        double se = 0.0;
        for (Index k = 0; k < r.output.size(); ++k) {
            if (r.observed.data()[k]) continue;
            const double e = r.output.data()[k] - windows[i].values.data()[k];
            se += e * e;
            ++r.n_missing;
        }
        r.mse = r.n_missing > 0 ? se / static_cast<double>(r.n_missing) : 0.0;
    }
    return res;
}

TaskResult impute(const Field& field, const data::TimeSeriesWindow& window, double missing_ratio,
                  const SamplerConfig& cfg, std::uint64_t seed) {
    const Mask m = random_missing_mask(window.values.rows(), window.values.cols(), missing_ratio, seed);
    return complete(field, {window}, {m}, cfg).front();
}

TaskResult predict(const Field& field, const data::TimeSeriesWindow& window, long horizon, const SamplerConfig& cfg) {
    const Mask m = horizon_mask(window.values.rows(), window.values.cols(), horizon);
    return complete(field, {window}, {m}, cfg).front();
}

std::vector<TaskResult> impute_all(const Field& field, const std::vector<data::TimeSeriesWindow>& windows,
                                   double missing_ratio, const SamplerConfig& cfg, std::uint64_t seed) {
    std::vector<Mask> masks;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        masks.push_back(random_missing_mask(windows[i].values.rows(), windows[i].values.cols(), missing_ratio,
                                            derive_seed(seed, i)));
    }
    return complete(field, windows, masks, cfg);
}

std::vector<TaskResult> predict_all(const Field& field, const std::vector<data::TimeSeriesWindow>& windows,
                                    long horizon, const SamplerConfig& cfg) {
    std::vector<Mask> masks;
    for (const auto& w : windows) masks.push_back(horizon_mask(w.values.rows(), w.values.cols(), horizon));
    return complete(field, windows, masks, cfg);
}

double pooled_mse(const std::vector<TaskResult>& results) {
    double se = 0.0;
    long n = 0;
    for (const auto& r : results) {
        se += r.mse * static_cast<double>(r.n_missing);
        n += r.n_missing;
    }
    return n > 0 ? se / static_cast<double>(n) : 0.0;
}

}  // namespace pafm::sample
