#include "pafm/trainer.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numbers>

#include "pafm/errors.hpp"
#include "pafm/flowmath.hpp"

namespace pafm::train {

net::NetConfig apply_ablation(net::NetConfig cfg, Ablation mode) {
    switch (mode) {
        case Ablation::Full:
            break;
        case Ablation::NoFrm:
            cfg.mixer = net::Mixer::Mlp;
            break;
        case Ablation::NoTd:
            cfg.use_decoder = false;
            break;
        case Ablation::NoTdTpb:
            cfg.use_decoder = false;
            cfg.perturbation = false;
            break;
    }
    return cfg;
}

net::NetConfig build_net_config(const config::ExperimentConfig& cfg) {
    const auto& n = cfg.net;
    net::NetConfig nc = net::make_net_config(static_cast<int>(cfg.data.window_len), static_cast<int>(cfg.data.n_features),
                                             n.n_heads, n.head_dim, n.enc_layers, n.dec_layers, n.n_experts, n.top_k);
    nc.conv_kernel = n.conv_kernel;
    nc.frm.normalization = n.gate_normalization;
    nc.untied_paths = n.untied_paths;
    nc = apply_ablation(nc, cfg.train.ablation);
    nc.validate();
    return nc;
}

double effective_sigma(const TrainConfig& cfg) { return cfg.ablation == Ablation::NoTdTpb ? 0.0 : cfg.sigma; }

double learning_rate(const TrainConfig& cfg, long iter) {
    if (iter <= 0) return 0.0;
    if (iter > cfg.total_iters) return 0.0;
    if (iter <= cfg.warmup_iters) {
        return cfg.lr_init * static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
    }
    const double progress =
        static_cast<double>(iter - cfg.warmup_iters) / static_cast<double>(cfg.total_iters - cfg.warmup_iters);
    return 0.5 * cfg.lr_init * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---- optimizer -----------------------------------------------------------------

Adam::Adam(const ag::ParameterStore& params, AdamOptions opts) : opts_(opts) {
    for (const auto& [name, p] : params.items()) {
        m_.emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
    }
}

void Adam::step(ag::ParameterStore& params, double lr) {
    ++steps_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    for (auto& [name, p] : params.items()) {
        Matrix& m = m_.at(name);
        Matrix& v = v_.at(name);
        m = opts_.beta1 * m + (1.0 - opts_.beta1) * p.grad;
        v = opts_.beta2 * v + (1.0 - opts_.beta2) * p.grad.cwiseProduct(p.grad);
        p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts_.eps);
    }
}

void Adam::restore(std::map<std::string, Matrix> m, std::map<std::string, Matrix> v, long steps) {
    for (const auto& [name, cur] : m_) {
        auto im = m.find(name);
        auto iv = v.find(name);
        if (im == m.end() || iv == v.end()) throw CheckpointError("optimizer state missing for " + name);
        if (im->second.rows() != cur.rows() || im->second.cols() != cur.cols() || iv->second.rows() != cur.rows() ||
            iv->second.cols() != cur.cols()) {
            throw CheckpointError("optimizer state shape mismatch for " + name);
        }
    }
    m_ = std::move(m);
    v_ = std::move(v);
    steps_ = steps;
}

double clip_grad_norm(ag::ParameterStore& params, double max_norm) {
    const double norm = params.grad_norm();
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, p] : params.items()) p.grad *= s;
    }
    return norm;
}

// ---- checkpoint container ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'A', 'F', 'M', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[8] = {'P', 'A', 'F', 'M', 'E', 'N', 'D', '\0'};
constexpr std::uint8_t kDtypeF64 = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    template <typename T>
    void pod(const T& v) {
        const char* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    void str(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const Matrix& m) {
        str(name);
        pod(kDtypeF64);
        pod(static_cast<std::uint32_t>(2));
        pod(static_cast<std::int64_t>(m.rows()));
        pod(static_cast<std::int64_t>(m.cols()));
        bytes(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
    }
    std::vector<char>& buffer() { return buf_; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(const std::vector<char>& buf, std::size_t end) : buf_(buf), end_(end) {}

    template <typename T>
    T pod(const std::string& what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str(const std::string& what) {
        const auto n = pod<std::uint64_t>(what);
        need(n, what);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::pair<std::string, Matrix> tensor() {
        std::string name = str("tensor name");
        const auto dtype = pod<std::uint8_t>(name);
        if (dtype != kDtypeF64) throw CheckpointError("tensor " + name + ": unsupported dtype");
        const auto ndims = pod<std::uint32_t>(name);
        if (ndims != 2) throw CheckpointError("tensor " + name + ": expected 2 dims");
        const auto rows = pod<std::int64_t>(name);
        const auto cols = pod<std::int64_t>(name);
        if (rows < 0 || cols < 0) throw CheckpointError("tensor " + name + ": negative shape");
        const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        need(n * sizeof(double), "tensor " + name + " data");
        Matrix m(rows, cols);
        std::memcpy(m.data(), buf_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return {std::move(name), std::move(m)};
    }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n, const std::string& what) {
        if (pos_ + n > end_) throw CheckpointError("checkpoint truncated while reading " + what);
    }

    const std::vector<char>& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.pod(kCheckpointVersion);
    w.str(config::canonical_text(ckpt.config));
    w.pod(static_cast<std::int64_t>(ckpt.iter));

    std::uint64_t count = ckpt.params.size() + ckpt.adam_m.size() + ckpt.adam_v.size();
    const bool has_norm = ckpt.normalization.dims() > 0;
    if (has_norm) count += 2;
    w.pod(count);
    for (const auto& [name, p] : ckpt.params.items()) w.tensor("param/" + name, p.value);
    for (const auto& [name, m] : ckpt.adam_m) w.tensor("adam_m/" + name, m);
    for (const auto& [name, v] : ckpt.adam_v) w.tensor("adam_v/" + name, v);
    if (has_norm) {
        w.tensor("norm/min", ckpt.normalization.min);
        w.tensor("norm/max", ckpt.normalization.max);
    }
    w.bytes(kTrailer, sizeof(kTrailer));
    const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
    w.pod(sum);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t tail = sizeof(kTrailer) + sizeof(std::uint64_t);
    if (buf.size() < sizeof(kMagic) + sizeof(std::uint32_t) + tail) {
        throw CheckpointError("checkpoint truncated: " + path.string());
    }
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint file: " + path.string());
    std::uint32_t version;
    std::memcpy(&version, buf.data() + sizeof(kMagic), sizeof(version));
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t body_end = buf.size() - tail;
    if (std::memcmp(buf.data() + body_end, kTrailer, sizeof(kTrailer)) != 0) {
        throw CheckpointError("checkpoint truncated or corrupt (missing trailer): " + path.string());
    }
    std::uint64_t stored;
    std::memcpy(&stored, buf.data() + body_end + sizeof(kTrailer), sizeof(stored));
    if (fnv1a(buf.data(), body_end + sizeof(kTrailer)) != stored) {
        throw CheckpointError("checkpoint checksum mismatch: " + path.string());
    }

    Reader r(buf, body_end);
    r.pod<std::array<char, 8>>("magic");
    r.pod<std::uint32_t>("version");
    Checkpoint ck;
    try {
        ck.config = config::parse_text(r.str("config"));
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config: ") + e.what());
    }
    ck.iter = static_cast<long>(r.pod<std::int64_t>("iter"));
    const auto count = r.pod<std::uint64_t>("tensor count");
    Matrix nmin, nmax;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto [name, m] = r.tensor();
        if (name.rfind("param/", 0) == 0) {
            ck.params.add(name.substr(6), std::move(m));
        } else if (name.rfind("adam_m/", 0) == 0) {
            ck.adam_m.emplace(name.substr(7), std::move(m));
        } else if (name.rfind("adam_v/", 0) == 0) {
            ck.adam_v.emplace(name.substr(7), std::move(m));
        } else if (name == "norm/min") {
            nmin = std::move(m);
        } else if (name == "norm/max") {
            nmax = std::move(m);
        } else {
            throw CheckpointError("unknown checkpoint tensor " + name);
        }
    }
    if (r.position() != body_end) throw CheckpointError("checkpoint has trailing bytes before the trailer");
    for (const auto& [name, p] : ck.params.items()) {
        for (const auto* moments : {&ck.adam_m, &ck.adam_v}) {
            auto it = moments->find(name);
            if (it == moments->end()) throw CheckpointError("optimizer state missing for " + name);
            if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
                throw CheckpointError("optimizer state shape mismatch for " + name);
            }
        }
    }
    if (ck.adam_m.size() != ck.params.size() || ck.adam_v.size() != ck.params.size()) {
        throw CheckpointError("optimizer state has keys without parameters");
    }
    if (nmin.size() != 0 || nmax.size() != 0) {
        if (nmin.rows() != 1 || nmax.rows() != 1 || nmin.cols() != nmax.cols()) {
            throw CheckpointError("normalization tensors norm/min, norm/max have inconsistent shapes");
        }
        ck.normalization.min = nmin.row(0);
        ck.normalization.max = nmax.row(0);
    }
    return ck;
}

net::VelocityNet make_net(const Checkpoint& ckpt) {
    try {
        return net::VelocityNet(build_net_config(ckpt.config), ckpt.params);
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint does not match its config: ") + e.what());
    }
}

// ---- training loop ----------------------------------------------------------------------

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, 0x1417); }
std::uint64_t batch_seed(std::uint64_t seed) { return derive_seed(seed, 0xba7c); }
std::uint64_t noise_seed(std::uint64_t seed, long iter) {
    return derive_seed(seed, 0x0153, static_cast<std::uint64_t>(iter));
}

namespace {

Checkpoint snapshot(const config::ExperimentConfig& cfg, long iter, const ag::ParameterStore& params,
                    const Adam& adam, const data::NormalizationStats& norm) {
    Checkpoint ck;
    ck.config = cfg;
    ck.iter = iter;
    for (const auto& [name, p] : params.items()) ck.params.add(name, p.value);
    ck.adam_m = adam.first_moments();
    ck.adam_v = adam.second_moments();
    ck.normalization = norm;
    return ck;
}

}  // namespace

TrainResult train(const std::vector<data::TimeSeriesWindow>& windows, const config::ExperimentConfig& cfg,
                  const TrainOptions& opts) {
    if (windows.empty()) throw ArgumentError("train: no training windows");
    cfg.validate();
    const TrainConfig& tc = cfg.train;
    const net::NetConfig nc = build_net_config(cfg);
    const Index tau = nc.seq_len;
    const Index d = nc.n_features;
    for (const auto& w : windows) {
        if (w.values.rows() != tau || w.values.cols() != d) {
            throw ConfigError("train: window shape " + std::to_string(w.values.rows()) + "x" +
                              std::to_string(w.values.cols()) + " does not match the configured " +
                              std::to_string(tau) + "x" + std::to_string(d));
        }
    }

    long start = 0;
    data::NormalizationStats norm = opts.normalization;
    std::unique_ptr<net::VelocityNet> net;
    if (opts.resume) {
        net = std::make_unique<net::VelocityNet>(make_net(*opts.resume));
        start = opts.resume->iter;
        if (norm.dims() == 0) norm = opts.resume->normalization;
    } else {
        net = std::make_unique<net::VelocityNet>(nc, init_seed(tc.seed));
    }
    Adam adam(net->params());
    if (opts.resume) adam.restore(opts.resume->adam_m, opts.resume->adam_v, start);

    const long stop = opts.stop_after >= 0 ? std::min(opts.stop_after, tc.total_iters) : tc.total_iters;
    const double sigma = effective_sigma(tc);
    const bool perturb = nc.perturbation;

    data::BatchStream stream(windows.size(), static_cast<std::size_t>(tc.batch_size), batch_seed(tc.seed));
    stream.seek(static_cast<std::uint64_t>(start));

    TrainResult res;
    for (long it = start; it < stop; ++it) {
        const std::vector<std::size_t> idx = stream.next();
        const Index b = static_cast<Index>(idx.size());
        Rng rng(noise_seed(tc.seed, it));

        std::vector<double> t(idx.size());
        for (double& ti : t) ti = uniform01(rng);
        Matrix x1(b * tau, d);
        for (Index i = 0; i < b; ++i) x1.middleRows(i * tau, tau) = windows[idx[static_cast<std::size_t>(i)]].values;
        const Matrix x0 = normal_matrix(b * tau, d, rng);
        Matrix xt(b * tau, d);
        for (Index i = 0; i < b; ++i) {
            xt.middleRows(i * tau, tau) =
                flow::interpolate(x0.middleRows(i * tau, tau), x1.middleRows(i * tau, tau), t[static_cast<std::size_t>(i)]);
        }
        Matrix xt_pert = xt;
        if (perturb) xt_pert = flow::perturb(xt, sigma, rng).xt_pert;

        double loss_value;
        try {
            ag::Graph g;
            net::PathVars pv = net->forward(g, g.constant(xt), g.constant(xt_pert), t, tc.alpha);
            ag::Var loss = ag::mse(pv.v_final, x1 - x0);
            loss_value = loss.value()(0, 0);
            if (!std::isfinite(loss_value)) throw NumericError("loss is non-finite");
            net->params().zero_grad();
            g.backward(loss);
        } catch (const NumericError& e) {
            res.ok = false;
            res.failed_iter = it + 1;
            res.failure = "iteration " + std::to_string(it + 1) + ": " + e.what();
            break;
        }
        if (!std::isfinite(clip_grad_norm(net->params(), tc.clip_norm))) {
            // Parameters are still those of the previous step.
            res.ok = false;
            res.failed_iter = it + 1;
            res.failure = "iteration " + std::to_string(it + 1) + ": non-finite gradient norm";
            break;
        }
        const double lr = learning_rate(tc, it + 1);
        adam.step(net->params(), lr);

        LossRecord rec{it + 1, lr, loss_value};
        res.log.push_back(rec);
        if (opts.on_iter) opts.on_iter(rec);
    }
    const long done = res.log.empty() ? start : res.log.back().iter;
    res.checkpoint = snapshot(cfg, done, net->params(), adam, norm);
    return res;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write loss log: " + path.string());
    out << "iter,lr,loss\n" << std::setprecision(17);
    for (const auto& r : log) out << r.iter << ',' << r.lr << ',' << r.loss << '\n';
}

}  // namespace pafm::train
