#include "pafm/velocity_net.hpp"

#include <cmath>

#include "pafm/errors.hpp"
#include "pafm/layers.hpp"

namespace pafm::net {

namespace {

void check_finite(const ag::Var& v, const std::string& where) {
    if (!v.value().allFinite()) throw NumericError(where + ": non-finite activation");
}

std::string block(const char* stack, int i) { return std::string(stack) + "." + std::to_string(i); }

}  // namespace

void NetConfig::validate() const {
    if (seq_len < 1 || n_features < 1) throw ConfigError("net: seq_len and n_features must be >= 1");
    if (n_heads < 1 || head_dim < 1) throw ConfigError("net: n_heads and head_dim must be >= 1");
    if (d_model != n_heads * head_dim) {
        throw ConfigError("net: d_model (" + std::to_string(d_model) + ") must equal n_heads * head_dim (" +
                          std::to_string(n_heads * head_dim) + ")");
    }
    if (enc_layers < 1) throw ConfigError("net: enc_layers must be >= 1");
    if (dec_layers < 1) throw ConfigError("net: dec_layers must be >= 1");
    if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("net: conv_kernel must be odd and >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw ConfigError("net: time_embed_dim must be even and >= 2");
    if (ffn_hidden < 1) throw ConfigError("net: ffn_hidden must be >= 1");
    if (frm.d_model != d_model) throw ConfigError("net: frm.d_model must equal d_model");
    frm.validate();
}

NetConfig make_net_config(int seq_len, int n_features, int n_heads, int head_dim, int enc_layers, int dec_layers,
                          int n_experts, int top_k) {
    NetConfig c;
    c.seq_len = seq_len;
    c.n_features = n_features;
    c.n_heads = n_heads;
    c.head_dim = head_dim;
    c.d_model = n_heads * head_dim;
    c.enc_layers = enc_layers;
    c.dec_layers = dec_layers;
    c.time_embed_dim = c.d_model % 2 == 0 ? c.d_model : c.d_model + 1;
    c.ffn_hidden = 4 * c.d_model;
    c.frm.n_experts = n_experts;
    c.frm.top_k = top_k;
    c.frm.d_model = c.d_model;
    c.frm.d_hidden = 4 * c.d_model;
    return c;
}

Matrix time_embedding(const std::vector<double>& t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ArgumentError("time_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    Matrix out(static_cast<Index>(t.size()), dim);
    for (std::size_t b = 0; b < t.size(); ++b) {
        const double scaled = 1000.0 * t[b];
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            out(static_cast<Index>(b), i) = std::sin(scaled * freq);
            out(static_cast<Index>(b), half + i) = std::cos(scaled * freq);
        }
    }
    return out;
}

// ---- parameters -------------------------------------------------------------

ag::ParameterStore VelocityNet::initial_parameters(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ag::ParameterStore s;
    Rng rng(seed);
    const Index dm = cfg.d_model;

    auto add_front = [&](const std::string& pre) {
        layers::add_conv1d(s, pre + "embed", cfg.n_features, dm, cfg.conv_kernel, rng);
        Matrix pos = normal_matrix(cfg.seq_len, dm, rng) * 0.02;
        s.add(pre + "pos", std::move(pos));
        for (int l = 0; l < cfg.enc_layers; ++l) {
            const std::string p = pre + block("enc", l);
            layers::add_layer_norm(s, p + ".ln1", dm);
            layers::add_attention(s, p + ".attn", dm, rng);
            layers::add_layer_norm(s, p + ".ln2", dm);
            layers::add_feed_forward(s, p + ".ffn", dm, cfg.ffn_hidden, rng);
        }
    };
    add_front("");
    if (cfg.untied_paths && cfg.perturbation) add_front("pert.");

    if (cfg.use_decoder) {
        for (int b = 0; b < cfg.dec_layers; ++b) {
            const std::string p = block("dec", b);
            layers::add_linear(s, p + ".adaln.fc1", cfg.time_embed_dim, dm, rng);
            layers::add_linear(s, p + ".adaln.fc2", dm, 6 * dm, rng, /*zero_init=*/true);
            layers::add_attention(s, p + ".self_attn", dm, rng);
            layers::add_attention(s, p + ".cross_attn", dm, rng);
            if (cfg.mixer == Mixer::Frm) {
                moe::init_frm_params(s, p + ".frm", cfg.frm, rng);
            } else {
                layers::add_feed_forward(s, p + ".mlp.ffn", dm, cfg.frm.d_hidden, rng);
                layers::add_layer_norm(s, p + ".mlp.norm", dm);
            }
        }
    }
    layers::add_conv1d(s, "proj", dm, cfg.n_features, cfg.conv_kernel, rng);
    if (cfg.perturbation) layers::add_linear(s, "refine", cfg.n_features, cfg.n_features, rng);
    return s;
}

VelocityNet::VelocityNet(NetConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), params_(initial_parameters(cfg_, seed)) {}

VelocityNet::VelocityNet(NetConfig cfg, ag::ParameterStore params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    const ag::ParameterStore expected = initial_parameters(cfg_, 0);
    for (const auto& [name, p] : expected.items()) {
        if (!params_.contains(name)) throw ConfigError("velocity net: missing parameter " + name);
        const Matrix& v = params_.at(name).value;
        if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
            throw ConfigError("velocity net: parameter " + name + " has shape " + std::to_string(v.rows()) + "x" +
                              std::to_string(v.cols()) + ", expected " + std::to_string(p.value.rows()) + "x" +
                              std::to_string(p.value.cols()));
        }
    }
    if (params_.size() != expected.size()) throw ConfigError("velocity net: unexpected extra parameters");
}

std::size_t count_parameters(const NetConfig& cfg) { return VelocityNet::initial_parameters(cfg, 0).scalar_count(); }

std::string VelocityNet::path_prefix(bool perturbed_path) const {
    return perturbed_path && cfg_.untied_paths && cfg_.perturbation ? "pert." : "";
}

// ---- stages -------------------------------------------------------------------

ag::Var VelocityNet::embed(ag::Graph& g, const ag::Var& x, Index batch, bool perturbed_path) {
    if (x.cols() != cfg_.n_features) {
        throw ConfigError("embed: input has " + std::to_string(x.cols()) + " features, net expects " +
                          std::to_string(cfg_.n_features));
    }
    if (x.rows() != batch * cfg_.seq_len) throw ConfigError("embed: input rows do not match batch * seq_len");
    const std::string pre = path_prefix(perturbed_path);
    ag::Var h = layers::conv1d(g, x, params_, pre + "embed", batch, cfg_.conv_kernel);
    return ag::add(h, ag::tile_rows(g.param(params_.at(pre + "pos")), batch));
}

ag::Var VelocityNet::encode(ag::Graph& g, const ag::Var& h, Index batch, bool perturbed_path) {
    const std::string pre = path_prefix(perturbed_path);
    ag::Var x = h;
    for (int l = 0; l < cfg_.enc_layers; ++l) {
        const std::string p = pre + block("enc", l);
        ag::Var h1 = layers::layer_norm(g, x, params_, p + ".ln1");
        x = ag::add(x, layers::attention(g, h1, h1, params_, p + ".attn", batch, cfg_.n_heads));
        x = ag::add(x, layers::feed_forward(g, layers::layer_norm(g, x, params_, p + ".ln2"), params_, p + ".ffn"));
        check_finite(x, "encoder layer " + std::to_string(l));
    }
    return x;
}

ag::Var VelocityNet::decode(ag::Graph& g, const ag::Var& e, const Matrix& t_embed, const ag::Var& ctx, Index batch) {
    if (t_embed.rows() != batch) throw ArgumentError("decode: need one time embedding per sample");
    const Index dm = cfg_.d_model;
    const Index len = cfg_.seq_len;
    ag::Var temb = g.constant(t_embed);
    ag::Var ctx_n = ag::layer_norm(ctx);
    ag::Var x = e;
    for (int b = 0; b < cfg_.dec_layers; ++b) {
        const std::string p = block("dec", b);
        ag::Var mod = layers::linear(g, ag::silu(layers::linear(g, temb, params_, p + ".adaln.fc1")), params_,
                                     p + ".adaln.fc2");
        ag::Var rep = ag::repeat_rows(mod, len);
        auto chunk = [&](int i) { return ag::slice_cols(rep, i * dm, dm); };
        auto modulate = [&](const ag::Var& v, int shift, int scale) {
            return ag::add(ag::mul(ag::layer_norm(v), ag::affine(chunk(scale), 1.0, 1.0)), chunk(shift));
        };

        ag::Var h = modulate(x, 0, 1);
        x = ag::add(x, ag::mul(chunk(2), layers::attention(g, h, h, params_, p + ".self_attn", batch, cfg_.n_heads)));
        check_finite(x, "decoder block " + std::to_string(b) + " self-attention");

        h = modulate(x, 3, 4);
        x = ag::add(x, ag::mul(chunk(5), layers::attention(g, h, ctx_n, params_, p + ".cross_attn", batch, cfg_.n_heads)));
        check_finite(x, "decoder block " + std::to_string(b) + " cross-attention");

        if (cfg_.mixer == Mixer::Frm) {
            x = moe::frm_forward(g, x, params_, p + ".frm", cfg_.frm);
        } else {
            x = layers::layer_norm(g, ag::add(x, layers::feed_forward(g, x, params_, p + ".mlp.ffn")), params_,
                                   p + ".mlp.norm");
        }
        check_finite(x, "decoder block " + std::to_string(b) + (cfg_.mixer == Mixer::Frm ? " frm" : " mlp"));
    }
    return x;
}

ag::Var VelocityNet::project(ag::Graph& g, const ag::Var& d, Index batch) {
    if (d.cols() != cfg_.d_model) throw ConfigError("project: input width does not match d_model");
    return layers::conv1d(g, d, params_, "proj", batch, cfg_.conv_kernel);
}

ag::Var VelocityNet::refine_gate(ag::Graph& g, const ag::Var& v) {
    return ag::sigmoid(layers::linear(g, v, params_, "refine"));
}

PathVars VelocityNet::forward(ag::Graph& g, const ag::Var& xt, const ag::Var& xt_pert, const std::vector<double>& t,
                              double alpha) {
    const Index batch = static_cast<Index>(t.size());
    if (batch < 1) throw ArgumentError("forward: empty batch");
    if (xt.rows() != batch * cfg_.seq_len || xt.cols() != cfg_.n_features) {
        throw ArgumentError("forward: xt must be (batch * seq_len) x n_features");
    }
    if (xt_pert.rows() != xt.rows() || xt_pert.cols() != xt.cols()) {
        throw ArgumentError("forward: xt and xt_pert shapes differ");
    }
    for (double ti : t) {
        if (!(ti >= 0.0 && ti <= 1.0)) throw ArgumentError("forward: t must be in [0, 1]");
    }

    PathVars out;
    ag::Var e = encode(g, embed(g, xt, batch), batch);
    if (!cfg_.perturbation) {
        ag::Var d = cfg_.use_decoder ? decode(g, e, time_embedding(t, cfg_.time_embed_dim), e, batch) : e;
        out.v = project(g, d, batch);
        out.v_pert = out.v;
        out.v_final = out.v;
        return out;
    }
    ag::Var e_pert = encode(g, embed(g, xt_pert, batch, true), batch, true);
    ag::Var d = e;
    ag::Var d_pert = e_pert;
    if (cfg_.use_decoder) {
        const Matrix temb = time_embedding(t, cfg_.time_embed_dim);
        d = decode(g, e, temb, e_pert, batch);
        d_pert = decode(g, e_pert, temb, e_pert, batch);
    }
    out.v = project(g, d, batch);
    out.v_pert = project(g, d_pert, batch);
    out.gate = refine_gate(g, out.v);
    out.v_final = ag::add(out.v, ag::scale(ag::mul(ag::sub(out.v_pert, out.v), out.gate), alpha));
    return out;
}

// ---- inference conveniences ------------------------------------------------------
//
// These build gradient-free graphs; the const_cast is safe because such graphs
// only read parameter values.

Index VelocityNet::batch_of(const Matrix& stacked) const {
    if (stacked.rows() % cfg_.seq_len != 0 || stacked.rows() == 0) {
        throw ArgumentError("input rows must be a positive multiple of seq_len");
    }
    return stacked.rows() / cfg_.seq_len;
}

Matrix VelocityNet::embed(const Matrix& x) const {
    auto& self = const_cast<VelocityNet&>(*this);
    ag::Graph g(false);
    return self.embed(g, g.constant(x), batch_of(x)).value();
}

Matrix VelocityNet::encode(const Matrix& h) const {
    auto& self = const_cast<VelocityNet&>(*this);
    ag::Graph g(false);
    return self.encode(g, g.constant(h), batch_of(h)).value();
}

Matrix VelocityNet::decode(const Matrix& e, double t, const Matrix& ctx) const {
    if (!cfg_.use_decoder) throw ConfigError("decode: network was built without a decoder");
    auto& self = const_cast<VelocityNet&>(*this);
    ag::Graph g(false);
    const Index batch = batch_of(e);
    const std::vector<double> ts(static_cast<std::size_t>(batch), t);
    return self.decode(g, g.constant(e), time_embedding(ts, cfg_.time_embed_dim), g.constant(ctx), batch).value();
}

Matrix VelocityNet::project(const Matrix& d) const {
    auto& self = const_cast<VelocityNet&>(*this);
    ag::Graph g(false);
    return self.project(g, g.constant(d), batch_of(d)).value();
}

flow::VelocityOutput VelocityNet::dual_path_forward(const Matrix& xt, const Matrix& xt_pert, double t,
                                                    double alpha) const {
    const std::vector<double> ts(static_cast<std::size_t>(batch_of(xt)), t);
    return dual_path_forward(xt, xt_pert, ts, alpha);
}

flow::VelocityOutput VelocityNet::dual_path_forward(const Matrix& xt, const Matrix& xt_pert,
                                                    const std::vector<double>& t, double alpha) const {
    auto& self = const_cast<VelocityNet&>(*this);
    ag::Graph g(false);
    PathVars pv = self.forward(g, g.constant(xt), g.constant(xt_pert), t, alpha);
    flow::VelocityOutput out;
    out.v = pv.v.value();
    out.v_pert = pv.v_pert.value();
    out.delta = out.v_pert - out.v;
    out.v_final = pv.v_final.value();
    out.gate = pv.gate.valid() ? pv.gate.value() : Matrix::Zero(out.v.rows(), out.v.cols());
    return out;
}

}  // namespace pafm::net
