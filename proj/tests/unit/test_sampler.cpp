#include <gtest/gtest.h>

#include <cmath>

#include "pafm/errors.hpp"
#include "pafm/sampler.hpp"

using namespace pafm;

namespace {

sample::SamplerConfig cfg_with(long steps, double sigma = 0.0, std::uint64_t seed = 1) {
    sample::SamplerConfig c;
    c.n_steps = steps;
    c.sigma = sigma;
    c.seed = seed;
    c.batch_size = 8;
    return c;
}

// Starting noise of samples 0..b-1: the first draw of each sample's stream.
Matrix first_noise(Index tau, Index d, std::uint64_t seed, Index b) {
    Matrix z(b * tau, d);
    for (Index i = 0; i < b; ++i) {
        Rng rng(derive_seed(seed, 0x5a4d, static_cast<std::uint64_t>(i)));
        z.middleRows(i * tau, tau) = normal_matrix(tau, d, rng);
    }
    return z;
}

sample::StubField linear_field(Index tau, Index d) {
    return sample::StubField([](const Matrix& x, double) -> Matrix { return -x; }, tau, d);
}

net::VelocityNet tiny_net(std::uint64_t seed) {
    net::VelocityNet n(net::make_net_config(4, 2, 2, 4, 1, 1, 2, 1), seed);
    Rng rng(seed + 1);
    for (auto& [name, p] : n.params().items()) {
        if (name.find("adaln.fc2") != std::string::npos) p.value = 0.3 * normal_matrix(p.value.rows(), p.value.cols(), rng);
    }
    return n;
}

sample::Mask random_mask(Index r, Index c, std::uint64_t seed, double p_true = 0.5) {
    Rng rng(seed);
    sample::Mask m(r, c);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = uniform01(rng) < p_true;
    return m;
}

}  // namespace

TEST(Unconditional, ConstantFieldAddsConstant) {
    const sample::StubField f([](const Matrix& x, double) -> Matrix { return Matrix::Constant(x.rows(), x.cols(), 0.3); },
                              6, 3);
    const Matrix x0 = first_noise(6, 3, 1, 3);
    // One step is the single addition x0 + c.
    const auto one = sample::sample_unconditional(f, 3, cfg_with(1));
    for (Index b = 0; b < 3; ++b) EXPECT_EQ(one[static_cast<std::size_t>(b)], (x0.middleRows(6 * b, 6).array() + 0.3).matrix());
    // More steps round once per step.
    for (long T : {2, 10, 64, 500}) {
        const auto out = sample::sample_unconditional(f, 3, cfg_with(T));
        for (Index b = 0; b < 3; ++b) {
            EXPECT_LT((out[static_cast<std::size_t>(b)] - (x0.middleRows(6 * b, 6).array() + 0.3).matrix()).cwiseAbs().maxCoeff(),
                      1e-12);
        }
    }
}

TEST(Unconditional, ChunkingDoesNotChangeSamples) {
    const auto f = linear_field(5, 2);
    auto small = cfg_with(7, 0.2);
    small.batch_size = 2;
    auto big = cfg_with(7, 0.2);
    big.batch_size = 64;
    const auto a = sample::sample_unconditional(f, 9, small);
    const auto b = sample::sample_unconditional(f, 9, big);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(a[i], b[i]);
    const sample::NetField nf(tiny_net(21));
    const auto c = sample::sample_unconditional(nf, 5, small);
    const auto d = sample::sample_unconditional(nf, 5, big);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_LT((c[i] - d[i]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Unconditional, EulerMatchesDiscreteRecurrenceAndConverges) {
    const auto f = linear_field(5, 2);
    std::vector<double> err;
    for (long T : {10, 20, 40, 80}) {
        const Matrix x0 = first_noise(5, 2, 1, 1);
        const Matrix out = sample::sample_unconditional(f, 1, cfg_with(T))[0];
        EXPECT_LT((out - std::pow(1.0 - 1.0 / T, T) * x0).cwiseAbs().maxCoeff(), 1e-12);
        err.push_back((out - std::exp(-1.0) * x0).norm());
    }
    for (std::size_t i = 1; i < err.size(); ++i) EXPECT_NEAR(std::log2(err[i - 1] / err[i]), 1.0, 0.2);
}

TEST(Unconditional, PerturbedStubField) {
    // 2x + alpha * 2 * offset: the refinement of a linear field is a plain shift.
    const sample::StubField f([](const Matrix& x, double) -> Matrix { return 2.0 * x; }, 3, 1);
    const Matrix x = Matrix::Ones(3, 1), off = Matrix::Constant(3, 1, 0.1);
    EXPECT_LT((f.velocity(x, off, 0.5, 0.5) - Matrix::Constant(3, 1, 2.1)).cwiseAbs().maxCoeff(), 1e-15);
    const auto a = sample::sample_unconditional(f, 2, cfg_with(4, 0.2));
    const auto b = sample::sample_unconditional(f, 2, cfg_with(4, 0.0));
    EXPECT_NE(a[0], b[0]);
}

TEST(Unconditional, DeterministicChunkedAndSeeded) {
    const sample::NetField f(tiny_net(2));
    auto c = cfg_with(5, 0.1);
    const auto a = sample::sample_unconditional(f, 11, c);
    const auto b = sample::sample_unconditional(f, 11, c);
    ASSERT_EQ(a.size(), 11u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    c.seed = 2;
    EXPECT_NE(sample::sample_unconditional(f, 11, c)[0], a[0]);
    EXPECT_THROW(sample::sample_unconditional(f, 0, c), ArgumentError);
}

TEST(Unconditional, NonFiniteStateNamesStep) {
    const sample::StubField f(
        [](const Matrix& x, double t) -> Matrix { return t >= 0.5 ? Matrix::Constant(x.rows(), x.cols(), INFINITY) : x; },
        2, 1);
    try {
        sample::sample_unconditional(f, 1, cfg_with(4));
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos) << e.what();
    }
}

TEST(Conditional, NoObservationsEqualsUnconditional) {
    const sample::NetField f(tiny_net(3));
    const auto c = cfg_with(6, 0.1);
    const auto unc = sample::sample_unconditional(f, 3, c);
    std::vector<sample::ConditionSpec> conds(3, {sample::Mask::Constant(4, 2, false), Matrix::Zero(4, 2)});
    const auto cond = sample::sample_conditional(f, conds, c);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(cond[i], unc[i]);
}

TEST(Conditional, AllObservedReturnsValues) {
    const sample::NetField f(tiny_net(4));
    Rng rng(5);
    const Matrix y = normal_matrix(4, 2, rng);
    EXPECT_EQ(sample::sample_conditional(f, {sample::Mask::Constant(4, 2, true), y}, cfg_with(3)), y);
}

TEST(Conditional, HardConstraintOnRandomMasks) {
    const sample::NetField f(tiny_net(6));
    Rng rng(7);
    std::vector<sample::ConditionSpec> conds;
    for (std::uint64_t k = 0; k < 100; ++k) conds.push_back({random_mask(4, 2, 100 + k), normal_matrix(4, 2, rng)});
    auto c = cfg_with(8, 0.1);
    for (double gamma : {0.0, 0.05}) {
        c.guidance_weight = gamma;
        const auto outs = sample::sample_conditional(f, conds, c);
        for (std::size_t k = 0; k < conds.size(); ++k) {
            const auto& m = conds[k].observed_mask;
            EXPECT_TRUE((m.select(outs[k].array(), 0.0) == m.select(conds[k].observed_values.array(), 0.0)).all());
        }
    }
}

TEST(Conditional, GuidanceChangesFreeEntries) {
    const sample::NetField f(tiny_net(8));
    Rng rng(9);
    const sample::ConditionSpec cond{random_mask(4, 2, 10), normal_matrix(4, 2, rng)};
    auto c = cfg_with(8, 0.1);
    c.guidance_weight = 0.0;
    const Matrix plain = sample::sample_conditional(f, cond, c);
    c.guidance_weight = 0.05;
    EXPECT_NE(sample::sample_conditional(f, cond, c), plain);
}

TEST(Conditional, NetGuidanceGradientMatchesFiniteDifferences) {
    const sample::NetField f(tiny_net(11));
    Rng rng(12);
    const Matrix x = normal_matrix(8, 2, rng), off = 0.1 * normal_matrix(8, 2, rng), y = normal_matrix(8, 2, rng);
    const Matrix w = random_mask(8, 2, 13).cast<double>().matrix();
    const double t = 0.35, alpha = 1.0;
    auto objective = [&](const Matrix& xx) {
        const Matrix v = f.velocity(xx, off, t, alpha);
        return (w.array() * (xx + (1.0 - t) * v - y).array().square()).sum();
    };
    Matrix grad;
    const Matrix v = f.guided_velocity(x, off, t, alpha, w, y, grad);
    EXPECT_LT((v - f.velocity(x, off, t, alpha)).cwiseAbs().maxCoeff(), 1e-14);
    const double h = 1e-6;
    for (Index k = 0; k < x.size(); ++k) {
        Matrix xp = x, xm = x;
        xp.data()[k] += h;
        xm.data()[k] -= h;
        const double num = (objective(xp) - objective(xm)) / (2 * h);
        EXPECT_NEAR(grad.data()[k], num, 1e-6 * std::max(1.0, std::abs(num)));
    }
}

TEST(Masks, ImputationCounts) {
    const auto m = sample::random_missing_mask(24, 7, 0.5, 3);
    EXPECT_EQ((!m).count(), 84);
    EXPECT_EQ((!sample::random_missing_mask(24, 7, 1e-6, 3)).count(), 1);
    EXPECT_EQ((!sample::random_missing_mask(24, 5, 0.1, 3)).count(), 12);
    EXPECT_TRUE((sample::random_missing_mask(24, 7, 0.5, 3) == m).all());
    EXPECT_FALSE((sample::random_missing_mask(24, 7, 0.5, 4) == m).all());
    EXPECT_THROW(sample::random_missing_mask(24, 7, 0.0, 3), ArgumentError);
    EXPECT_THROW(sample::random_missing_mask(24, 7, 1.0, 3), ArgumentError);
}

TEST(Masks, Horizon) {
    const auto m = sample::horizon_mask(24, 3, 23);
    EXPECT_TRUE(m.row(0).all());
    EXPECT_EQ(m.count(), 3);
    EXPECT_FALSE(sample::horizon_mask(24, 3, 6).bottomRows(6).any());
    EXPECT_TRUE(sample::horizon_mask(24, 3, 6).topRows(18).all());
    EXPECT_THROW(sample::horizon_mask(24, 3, 24), ArgumentError);
    EXPECT_THROW(sample::horizon_mask(24, 3, 0), ArgumentError);
}

TEST(Tasks, PredictEqualsBlockMaskImputation) {
    const sample::NetField f(tiny_net(14));
    const auto windows = data::generate_sines(3, 4, 2, 15);
    const auto c = cfg_with(6, 0.1);
    const auto pred = sample::predict_all(f, windows, 2, c);
    sample::Mask block = sample::Mask::Constant(4, 2, true);
    block.bottomRows(2) = false;
    const auto via_mask = sample::complete(f, windows, {block, block, block}, c);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        EXPECT_EQ(pred[i].output, via_mask[i].output);
        EXPECT_EQ(pred[i].mse, via_mask[i].mse);
        EXPECT_EQ(pred[i].n_missing, 4);
    }
    // Alone, window 0 sees the same noise; only GEMM blocking over the batch differs.
    EXPECT_LT((sample::predict(f, windows[0], 2, c).output - pred[0].output).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Tasks, ImputationMseOverMissingOnly) {
    const sample::NetField f(tiny_net(16));
    const auto w = data::generate_sines(1, 4, 2, 17)[0];
    const auto c = cfg_with(4, 0.1);
    const auto r = sample::impute(f, w, 1e-6, c, 18);
    ASSERT_EQ(r.n_missing, 1);
    Index miss = -1;
    for (Index k = 0; k < r.observed.size(); ++k) {
        if (!r.observed.data()[k]) miss = k;
    }
    const double e = r.output.data()[miss] - w.values.data()[miss];
    EXPECT_DOUBLE_EQ(r.mse, e * e);

    const auto all = sample::impute_all(f, {w, w}, 0.5, c, 18);
    EXPECT_EQ(all[0].n_missing, 4);
    EXPECT_NEAR(sample::pooled_mse(all), (all[0].mse + all[1].mse) / 2, 1e-15);
}

TEST(Tasks, RejectsBadConditions) {
    const sample::NetField f(tiny_net(19));
    EXPECT_THROW(sample::sample_conditional(f, {sample::Mask::Constant(3, 2, true), Matrix::Zero(3, 2)}, cfg_with(2)),
                 ArgumentError);
    Matrix bad = Matrix::Zero(4, 2);
    bad(0, 0) = NAN;
    EXPECT_THROW(sample::sample_conditional(f, {sample::Mask::Constant(4, 2, true), bad}, cfg_with(2)), ArgumentError);
    sample::Mask m = sample::Mask::Constant(4, 2, false);
    EXPECT_NO_THROW(sample::sample_conditional(f, {m, bad}, cfg_with(2)));  // unobserved cells are never read
}

TEST(Checkpointed, FieldFromCheckpoint) {
    train::Checkpoint ck;
    ck.config.data.window_len = 4;
    ck.config.data.n_features = 2;
    ck.config.net.n_heads = 2;
    ck.config.net.head_dim = 4;
    ck.config.net.n_experts = 2;
    ck.config.net.top_k = 1;
    const auto nc = train::build_net_config(ck.config);
    ck.params = net::VelocityNet::initial_parameters(nc, 20);
    const auto field = sample::field_from_checkpoint(ck);
    EXPECT_EQ(field->seq_len(), 4);
    const auto a = sample::sample_unconditional(ck, 2, cfg_with(3, 0.1));
    const auto b = sample::sample_unconditional(*field, 2, cfg_with(3, 0.1));
    EXPECT_EQ(a[1], b[1]);
}
