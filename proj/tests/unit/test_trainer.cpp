#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pafm/errors.hpp"
#include "pafm/trainer.hpp"

using namespace pafm;
namespace fs = std::filesystem;

namespace {

config::ExperimentConfig tiny_experiment(long iters = 20) {
    config::ExperimentConfig c;
    c.data.window_len = 4;
    c.data.n_features = 2;
    c.net.n_heads = 2;
    c.net.head_dim = 4;
    c.net.enc_layers = 1;
    c.net.dec_layers = 1;
    c.net.n_experts = 2;
    c.net.top_k = 1;
    c.train.total_iters = iters;
    c.train.warmup_iters = std::min<long>(5, iters - 1);
    c.train.batch_size = 4;
    c.train.lr_init = 1e-2;
    c.set_seed(3);
    return c;
}

std::vector<data::TimeSeriesWindow> tiny_windows(std::size_t n = 16) {
    return data::generate_sines(static_cast<long>(n), 4, 2, 5);
}

fs::path tmp(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pafm_test_trainer";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool same_params(const ag::ParameterStore& a, const ag::ParameterStore& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [name, p] : a.items()) {
        if (!b.contains(name) || b.at(name).value != p.value) return false;
    }
    return true;
}

}  // namespace

TEST(Schedule, WarmupAndCosine) {
    config::TrainConfig tc;
    tc.lr_init = 0.0008;
    tc.warmup_iters = 500;
    tc.total_iters = 12000;
    EXPECT_DOUBLE_EQ(train::learning_rate(tc, 250), 0.0004);
    EXPECT_DOUBLE_EQ(train::learning_rate(tc, 500), 0.0008);
    EXPECT_DOUBLE_EQ(train::learning_rate(tc, 0), 0.0);
    const long mid = 500 + (12000 - 500) / 2;
    EXPECT_NEAR(train::learning_rate(tc, mid), 0.0004, 1e-15);
    EXPECT_NEAR(train::learning_rate(tc, 12000), 0.0, 1e-18);
    EXPECT_EQ(train::learning_rate(tc, 12001), 0.0);
    for (long it = 501; it < 12000; it += 97) {
        EXPECT_LE(train::learning_rate(tc, it + 1), train::learning_rate(tc, it));
    }
}

TEST(Optimizer, AdamMatchesScalarRecurrence) {
    ag::ParameterStore s;
    auto& p = s.add("w", Matrix::Constant(1, 1, 0.5));
    train::Adam adam(s);
    double m = 0, v = 0, x = 0.5;
    const double grads[] = {0.3, -1.2, 0.05, 2.0};
    for (int k = 0; k < 4; ++k) {
        p.grad = Matrix::Constant(1, 1, grads[k]);
        adam.step(s, 0.01);
        m = 0.9 * m + 0.1 * grads[k];
        v = 0.999 * v + 0.001 * grads[k] * grads[k];
        const double mh = m / (1 - std::pow(0.9, k + 1));
        const double vh = v / (1 - std::pow(0.999, k + 1));
        x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        EXPECT_NEAR(p.value(0, 0), x, 1e-15);
    }
    EXPECT_EQ(adam.steps(), 4);
}

TEST(Optimizer, FirstStepIsSignTimesLr) {
    ag::ParameterStore s;
    auto& p = s.add("w", Matrix::Zero(1, 3));
    p.grad = (Matrix(1, 3) << 4.0, -0.01, 1e3).finished();
    train::Adam adam(s);
    adam.step(s, 0.1);
    EXPECT_NEAR(p.value(0, 0), -0.1, 1e-8);
    EXPECT_NEAR(p.value(0, 1), 0.1, 1e-5);
    EXPECT_NEAR(p.value(0, 2), -0.1, 1e-8);
}

TEST(Optimizer, ClipGlobalNorm) {
    ag::ParameterStore s;
    s.add("a", Matrix::Zero(1, 1)).grad = Matrix::Constant(1, 1, 3.0);
    s.add("b", Matrix::Zero(1, 1)).grad = Matrix::Constant(1, 1, 4.0);
    EXPECT_DOUBLE_EQ(train::clip_grad_norm(s, 1.0), 5.0);
    EXPECT_NEAR(s.at("a").grad(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(s.at("b").grad(0, 0), 0.8, 1e-15);
    EXPECT_NEAR(train::clip_grad_norm(s, 10.0), 1.0, 1e-15);
    EXPECT_NEAR(s.at("a").grad(0, 0), 0.6, 1e-15);
}

TEST(Ablation, ConfigEffects) {
    const net::NetConfig base = net::make_net_config(24, 5, 4, 16, 1, 2);
    const auto full = train::apply_ablation(base, config::Ablation::Full);
    EXPECT_EQ(full.mixer, base.mixer);
    EXPECT_EQ(full.use_decoder, base.use_decoder);
    EXPECT_EQ(full.perturbation, base.perturbation);
    EXPECT_EQ(net::count_parameters(full), net::count_parameters(base));
    EXPECT_EQ(train::apply_ablation(base, config::Ablation::NoFrm).mixer, net::Mixer::Mlp);
    EXPECT_FALSE(train::apply_ablation(base, config::Ablation::NoTd).use_decoder);
    EXPECT_TRUE(train::apply_ablation(base, config::Ablation::NoTd).perturbation);
    const auto plain = train::apply_ablation(base, config::Ablation::NoTdTpb);
    EXPECT_FALSE(plain.use_decoder);
    EXPECT_FALSE(plain.perturbation);

    config::TrainConfig tc;
    tc.sigma = 0.2;
    EXPECT_EQ(train::effective_sigma(tc), 0.2);
    tc.ablation = config::Ablation::NoTdTpb;
    EXPECT_EQ(train::effective_sigma(tc), 0.0);
}

TEST(Ablation, ParameterKeys) {
    auto cfg = tiny_experiment(2);
    const auto windows = tiny_windows();
    auto keys_of = [&](config::Ablation a) {
        cfg.train.ablation = a;
        return train::train(windows, cfg).checkpoint.params;
    };
    auto has = [](const ag::ParameterStore& s, const std::string& needle) {
        for (const auto& [name, p] : s.items()) {
            if (name.find(needle) != std::string::npos) return true;
        }
        return false;
    };
    const auto full = keys_of(config::Ablation::Full);
    EXPECT_TRUE(has(full, ".frm."));
    EXPECT_TRUE(has(full, "refine"));
    const auto no_frm = keys_of(config::Ablation::NoFrm);
    EXPECT_FALSE(has(no_frm, ".frm."));
    EXPECT_TRUE(has(no_frm, ".mlp."));
    const auto no_td = keys_of(config::Ablation::NoTd);
    EXPECT_FALSE(has(no_td, "dec."));
    EXPECT_TRUE(has(no_td, "refine"));
    const auto plain = keys_of(config::Ablation::NoTdTpb);
    EXPECT_FALSE(has(plain, "dec."));
    EXPECT_FALSE(has(plain, "refine"));
}

TEST(Training, SmokeSingleStep) {
    auto cfg = tiny_experiment(1);
    cfg.train.warmup_iters = 0;
    cfg.train.batch_size = 1;
    const auto res = train::train(tiny_windows(1), cfg);
    ASSERT_TRUE(res.ok);
    ASSERT_EQ(res.log.size(), 1u);
    EXPECT_EQ(res.checkpoint.iter, 1);
    EXPECT_TRUE(std::isfinite(res.log[0].loss));
}

TEST(Training, DeterministicAndSeedSensitive) {
    const auto cfg = tiny_experiment(8);
    const auto a = train::train(tiny_windows(), cfg);
    const auto b = train::train(tiny_windows(), cfg);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);
    EXPECT_TRUE(same_params(a.checkpoint.params, b.checkpoint.params));
    auto other = cfg;
    other.train.seed = 4;
    EXPECT_NE(train::train(tiny_windows(), other).log[0].loss, a.log[0].loss);
}

TEST(Training, ResumeReproducesUninterruptedRun) {
    const auto cfg = tiny_experiment(20);
    const auto windows = tiny_windows(10);  // batches wrap across epochs
    const auto full = train::train(windows, cfg);

    train::TrainOptions first;
    first.stop_after = 7;
    const auto part = train::train(windows, cfg, first);
    ASSERT_EQ(part.checkpoint.iter, 7);
    const fs::path p = tmp("resume.bin");
    train::save_checkpoint(part.checkpoint, p);
    const train::Checkpoint loaded = train::load_checkpoint(p);

    train::TrainOptions second;
    second.resume = &loaded;
    const auto rest = train::train(windows, loaded.config, second);
    ASSERT_EQ(part.log.size() + rest.log.size(), full.log.size());
    for (std::size_t i = 0; i < part.log.size(); ++i) EXPECT_EQ(part.log[i].loss, full.log[i].loss);
    for (std::size_t i = 0; i < rest.log.size(); ++i) {
        EXPECT_EQ(rest.log[i].iter, full.log[i + 7].iter);
        EXPECT_EQ(rest.log[i].loss, full.log[i + 7].loss) << "iter " << rest.log[i].iter;
    }
    EXPECT_TRUE(same_params(rest.checkpoint.params, full.checkpoint.params));
}

TEST(Training, LossFallsOnConstantTarget) {
    auto cfg = tiny_experiment(2000);
    cfg.train.warmup_iters = 50;
    cfg.train.batch_size = 16;
    cfg.train.lr_init = 3e-3;
    std::vector<data::TimeSeriesWindow> windows(32, {Matrix::Constant(4, 2, 0.7), 0});
    const auto res = train::train(windows, cfg);
    ASSERT_TRUE(res.ok);
    auto smooth = [&](std::size_t start) {
        double s = 0;
        for (std::size_t i = start; i < start + 50; ++i) s += res.log[i].loss;
        return s / 50;
    };
    // 50-step block means fall strictly until they first drop below 10% of the start.
    const double initial = smooth(0);
    double prev = initial;
    bool reached = false;
    for (std::size_t start = 50; start + 50 <= res.log.size() && !reached; start += 50) {
        const double cur = smooth(start);
        EXPECT_LT(cur, prev) << "block starting at " << start;
        prev = cur;
        reached = cur < 0.1 * initial;
    }
    EXPECT_TRUE(reached);
}

TEST(Training, NumericFailureKeepsLastFiniteState) {
    auto cfg = tiny_experiment(5);
    std::vector<data::TimeSeriesWindow> windows(4, {Matrix::Constant(4, 2, 1e308), 0});
    const auto res = train::train(windows, cfg);
    EXPECT_FALSE(res.ok);
    EXPECT_EQ(res.failed_iter, 1);
    EXPECT_EQ(res.checkpoint.iter, 0);
    EXPECT_NE(res.failure.find("iteration 1"), std::string::npos);
    for (const auto& [name, p] : res.checkpoint.params.items()) EXPECT_TRUE(p.value.allFinite()) << name;
}

TEST(Training, RejectsMismatchedWindows) {
    EXPECT_THROW(train::train(data::generate_sines(4, 5, 2, 1), tiny_experiment(2)), ConfigError);
    EXPECT_THROW(train::train({}, tiny_experiment(2)), ArgumentError);
}

TEST(Checkpoint, RoundTripIsExact) {
    auto cfg = tiny_experiment(3);
    train::TrainOptions opts;
    opts.normalization.min = RowVector::Constant(2, -3.0);
    opts.normalization.max = RowVector::Constant(2, 7.5);
    const auto res = train::train(tiny_windows(), cfg, opts);
    const fs::path p = tmp("rt.bin");
    train::save_checkpoint(res.checkpoint, p);
    const auto back = train::load_checkpoint(p);
    EXPECT_EQ(back.iter, 3);
    EXPECT_EQ(config::canonical_text(back.config), config::canonical_text(cfg));
    EXPECT_TRUE(same_params(back.params, res.checkpoint.params));
    for (const auto& [name, m] : res.checkpoint.adam_m) {
        EXPECT_EQ(back.adam_m.at(name), m);
        EXPECT_EQ(back.adam_v.at(name), res.checkpoint.adam_v.at(name));
    }
    EXPECT_EQ(back.normalization.min, opts.normalization.min);
    EXPECT_EQ(back.normalization.max, opts.normalization.max);
    EXPECT_NO_THROW(train::make_net(back));
}

TEST(Checkpoint, TruncationAndCorruptionAreRejected) {
    const auto res = train::train(tiny_windows(), tiny_experiment(2));
    const fs::path good = tmp("good.bin");
    train::save_checkpoint(res.checkpoint, good);
    const auto bytes = slurp(good);
    const fs::path bad = tmp("bad.bin");
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 3, bytes.size() / 2,
                            bytes.size() - 9, bytes.size() - 1}) {
        dump(bad, std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(cut)));
        EXPECT_THROW(train::load_checkpoint(bad), CheckpointError) << "cut at " << cut;
    }
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    dump(bad, flipped);
    EXPECT_THROW(train::load_checkpoint(bad), CheckpointError);
    EXPECT_THROW(train::load_checkpoint(tmp("does_not_exist.bin")), CheckpointError);
}

TEST(Seeds, StreamsAreDistinct) {
    EXPECT_NE(train::init_seed(1), train::batch_seed(1));
    EXPECT_NE(train::noise_seed(1, 0), train::noise_seed(1, 1));
    EXPECT_NE(train::noise_seed(1, 0), train::noise_seed(2, 0));
}

TEST(LossLog, WritesCsv) {
    const fs::path p = tmp("log.csv");
    train::write_loss_log(p, {{1, 0.5, 0.25}, {2, 0.25, 0.125}});
    std::ifstream in(p);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(header, "iter,lr,loss");
    EXPECT_EQ(row, "1,0.5,0.25");
}
