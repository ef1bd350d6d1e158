#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "pafm/data.hpp"
#include "pafm/errors.hpp"
#include "pafm/metrics.hpp"

using namespace pafm;
using metrics::EvalPair;
using metrics::Windows;

namespace {

Windows from_matrices(const std::vector<Matrix>& ms) {
    Windows out;
    for (std::size_t i = 0; i < ms.size(); ++i) out.push_back({ms[i], static_cast<long>(i)});
    return out;
}

Windows noise_windows(long n, Index tau, Index d, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::vector<Matrix> ms;
    for (long i = 0; i < n; ++i) ms.push_back(scale * normal_matrix(tau, d, rng));
    return from_matrices(ms);
}

// Naive Pearson correlation over pooled rows, by explicit loops.
double loop_corr(const Windows& ws, Index a, Index b) {
    double n = 0, sa = 0, sb = 0;
    for (const auto& w : ws) {
        for (Index t = 0; t < w.values.rows(); ++t) {
            sa += w.values(t, a);
            sb += w.values(t, b);
            n += 1;
        }
    }
    const double ma = sa / n, mb = sb / n;
    double cab = 0, caa = 0, cbb = 0;
    for (const auto& w : ws) {
        for (Index t = 0; t < w.values.rows(); ++t) {
            const double da = w.values(t, a) - ma, db = w.values(t, b) - mb;
            cab += da * db;
            caa += da * da;
            cbb += db * db;
        }
    }
    return cab / std::sqrt(caa * cbb);
}

}  // namespace

TEST(Correlational, MatchesLoopOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Windows real = noise_windows(30, 8, 4, seed);
        Windows synth = noise_windows(25, 8, 4, 100 + seed);
        // some structure: feature 1 leans on feature 0
        for (auto& w : real) w.values.col(1) += 0.7 * w.values.col(0);
        for (auto& w : synth) w.values.col(3) -= 0.4 * w.values.col(2);
        double acc = 0;
        for (Index i = 0; i < 4; ++i) {
            for (Index j = 0; j < 4; ++j) acc += std::abs(loop_corr(real, i, j) - loop_corr(synth, i, j));
        }
        const double score = metrics::correlational_score({real, synth}).score;
        EXPECT_LE(std::abs(score - acc / 16.0), 1e-9);
        EXPECT_GE(score, 0.0);
        EXPECT_LE(score, 2.0);
    }
}

TEST(Correlational, IdenticalSetsScoreZero) {
    const Windows w = data::generate_sines(40, 24, 5, 3);
    EXPECT_EQ(metrics::correlational_score({w, w}).score, 0.0);
}

TEST(Correlational, DuplicateVersusNegatedDuplicate) {
    Windows real = noise_windows(10, 6, 2, 4), synth = real;
    for (auto& w : real) w.values.col(1) = w.values.col(0);
    for (auto& w : synth) w.values.col(1) = -w.values.col(0);
    EXPECT_NEAR(metrics::correlational_score({real, synth}).score, 1.0, 1e-12);
}

TEST(Correlational, DegenerateFeatureRule) {
    Windows real = noise_windows(10, 6, 3, 5), synth = noise_windows(10, 6, 3, 6);
    for (auto& w : real) w.values.col(2).setConstant(0.5);
    const auto res = metrics::correlational_score({real, synth});
    ASSERT_EQ(res.degenerate_real, std::vector<Index>{2});
    EXPECT_TRUE(res.degenerate_synthetic.empty());
    // 5 of the 9 entries touch feature 2 and cost 1 each
    double acc = 5.0;
    for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 2; ++j) acc += std::abs(loop_corr(real, i, j) - loop_corr(synth, i, j));
    }
    EXPECT_NEAR(res.score, acc / 9.0, 1e-9);

    for (auto& w : synth) w.values.col(2).setConstant(-1.0);
    const auto both = metrics::correlational_score({real, synth});
    EXPECT_EQ(both.degenerate_synthetic, std::vector<Index>{2});
    EXPECT_LT(both.score, res.score);
}

TEST(Frechet, UnitShiftGaussians) {
    Rng rng(11);
    const Matrix a = normal_matrix(100000, 1, rng);
    const Matrix b = normal_matrix(100000, 1, rng).array() + 1.0;
    const double d = metrics::frechet_distance(a, b);
    EXPECT_NEAR(d, 1.0, 0.05);
    EXPECT_NEAR(metrics::frechet_distance(b, a), d, 1e-9);
}

TEST(Frechet, ClosedFormMultivariate) {
    // Diagonal covariances: ||mu||^2 + sum (sa - sb)^2 in std units.
    Rng rng(12);
    Matrix a = normal_matrix(100000, 3, rng), b = normal_matrix(100000, 3, rng);
    a.col(1) *= 2.0;
    b.col(2) *= 0.5;
    b.col(0).array() += 0.5;
    const double expect = 0.25 + 1.0 + 0.25;
    EXPECT_NEAR(metrics::frechet_distance(a, b), expect, 0.05);
}

TEST(Frechet, IdenticalAndErrors) {
    Rng rng(13);
    const Matrix a = normal_matrix(500, 64, rng);
    EXPECT_LE(metrics::frechet_distance(a, a), 1e-6);
    EXPECT_THROW(metrics::frechet_distance(a, Matrix::Zero(10, 3)), ArgumentError);
    EXPECT_THROW(metrics::frechet_distance(a.topRows(1), a), ArgumentError);
}

TEST(Encoder, ShapeDeterminismSeparation) {
    metrics::EncoderOptions opts;
    opts.steps = 300;
    const Windows sines = data::generate_sines(600, 24, 3, 21);
    const Windows sines_b(sines.begin() + 300, sines.end());
    const Windows sines_a(sines.begin(), sines.begin() + 300);
    const auto enc = metrics::train_feature_encoder(sines_a, opts, 5);
    const Matrix e = enc.encode(sines_a);
    EXPECT_EQ(e.rows(), 300);
    EXPECT_EQ(e.cols(), 64);
    EXPECT_EQ(enc.encode(sines_a), e);
    EXPECT_EQ(metrics::train_feature_encoder(sines_a, opts, 5).encode(sines_b), enc.encode(sines_b));
    const Windows one{sines_a[7]};
    EXPECT_EQ(enc.encode(one).row(0), enc.encode({sines_a[7]}).row(0));
    EXPECT_LE((enc.encode(one).row(0) - e.row(7)).cwiseAbs().maxCoeff(), 1e-12);

    Windows noise = noise_windows(300, 24, 3, 22, 0.3);
    for (auto& w : noise) w.values.array() += 0.5;
    const double within = metrics::frechet_distance(e, enc.encode(sines_b));
    const double across = metrics::frechet_distance(e, enc.encode(noise));
    EXPECT_GT(across, 10.0 * within) << within << " " << across;

    EXPECT_THROW(metrics::train_feature_encoder(Windows(sines.begin(), sines.begin() + 50), opts, 1), ArgumentError);
}

TEST(ContextFid, IdenticalSetIsZero) {
    metrics::EncoderOptions opts;
    opts.steps = 50;
    const Windows w = data::generate_sines(200, 16, 2, 23);
    const auto enc = metrics::train_feature_encoder(w, opts, 1);
    EXPECT_LE(metrics::context_fid({w, w}, enc), 1e-6);
}

TEST(Pca, RankOneData) {
    Rng rng(31);
    const RowVector dir = normal_matrix(1, 6, rng);
    Matrix rows(50, 6);
    for (Index i = 0; i < 50; ++i) rows.row(i) = (static_cast<double>(i) - 20.0) * dir;
    rows.rowwise() += RowVector::Constant(6, 3.0);
    const auto p = metrics::fit_pca(rows, 2);
    EXPECT_LT(p.variance(1), 1e-8 * p.variance(0));
    EXPECT_NEAR(std::abs(p.components.row(0).dot(dir.normalized())), 1.0, 1e-10);
}

TEST(Pca, CenteringAndLosslessRoundTrip) {
    Rng rng(32);
    const Matrix rows = (normal_matrix(40, 5, rng).array() + 2.0).matrix();
    const auto p = metrics::fit_pca(rows, 5);
    const Matrix proj = metrics::pca_project(p, rows);
    EXPECT_LE(proj.colwise().mean().cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((metrics::pca_reconstruct(p, proj) - rows).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((p.components * p.components.transpose() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
    for (Index k = 1; k < 5; ++k) EXPECT_GE(p.variance(k - 1), p.variance(k));
    EXPECT_THROW(metrics::fit_pca(rows.topRows(2), 1), ArgumentError);
    EXPECT_THROW(metrics::fit_pca(rows, 6), ArgumentError);
}

TEST(Pca, ExportCsv) {
    const Windows w = data::generate_sines(20, 8, 2, 33);
    const auto path = std::filesystem::temp_directory_path() / "pafm_test_pca.csv";
    metrics::write_pca_csv(path, {w, w});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "set,pc1,pc2");
    long n_real = 0, n_synth = 0;
    while (std::getline(in, line)) {
        n_real += line.rfind("real,", 0) == 0;
        n_synth += line.rfind("synthetic,", 0) == 0;
    }
    EXPECT_EQ(n_real, 20);
    EXPECT_EQ(n_synth, 20);
    std::filesystem::remove(path);
    EXPECT_THROW(metrics::write_pca_csv(path, {Windows(w.begin(), w.begin() + 2), w}), ArgumentError);
}

TEST(Histograms, CountsAndRange) {
    const Windows real = data::generate_sines(10, 8, 2, 34);
    Windows synth = real;
    for (auto& w : synth) w.values.array() += 2.0;
    const auto hs = metrics::value_histograms({real, synth}, 10);
    ASSERT_EQ(hs.size(), 2u);
    for (const auto& h : hs) {
        long nr = 0, ns = 0;
        for (long c : h.real) nr += c;
        for (long c : h.synthetic) ns += c;
        EXPECT_EQ(nr, 80);
        EXPECT_EQ(ns, 80);
        EXPECT_EQ(h.lo, metrics::pool_time(real).col(h.feature).minCoeff());
        EXPECT_EQ(h.hi, metrics::pool_time(synth).col(h.feature).maxCoeff());
    }
    EXPECT_THROW(metrics::value_histograms({real, synth}, 0), ArgumentError);
}

TEST(Discriminative, IdenticalHalvesNearChance) {
    const Windows all = data::generate_sines(2000, 24, 5, 41);
    const EvalPair pair{Windows(all.begin(), all.begin() + 1000), Windows(all.begin() + 1000, all.end())};
    metrics::GruOptions opts;
    opts.max_steps = 1000;
    const auto s = metrics::discriminative_score(pair, 5, 7, opts);
    EXPECT_EQ(s.runs.size(), 5u);
    EXPECT_LT(s.mean, 0.05) << s.stddev;
    for (double r : s.runs) {
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 0.5);
    }
}

TEST(Discriminative, OffsetIsSeparable) {
    const Windows real = data::generate_sines(200, 24, 2, 42);
    Windows synth = data::generate_sines(200, 24, 2, 43);
    for (auto& w : synth) w.values.array() += 10.0;
    metrics::GruOptions opts;
    opts.max_steps = 500;
    EXPECT_GT(metrics::discriminative_score({real, synth}, 2, 8, opts).mean, 0.45);
}

TEST(Discriminative, Errors) {
    const Windows w = data::generate_sines(10, 8, 2, 44);
    EXPECT_THROW(metrics::discriminative_run({w, w}, 1), ArgumentError);
    EXPECT_THROW(metrics::discriminative_run({{}, w}, 1), ArgumentError);
    EXPECT_THROW(metrics::discriminative_run({w, data::generate_sines(30, 9, 2, 1)}, 1), ArgumentError);
}

TEST(Predictive, StationaryAr1ApproachesOptimalMae) {
    // x_{t+1} = phi x_t + s e; the best one-step predictor is phi x_t with MAE s sqrt(2/pi).
    const double phi = 0.8, s = 0.1;
    Rng rng(51);
    std::normal_distribution<double> n01;
    std::vector<Matrix> ms;
    for (int i = 0; i < 600; ++i) {
        Matrix w(24, 1);
        w(0, 0) = s / std::sqrt(1 - phi * phi) * n01(rng);
        for (Index t = 1; t < 24; ++t) w(t, 0) = phi * w(t - 1, 0) + s * n01(rng);
        ms.push_back(w);
    }
    const Windows w = from_matrices(ms);
    double oracle = 0;
    for (const auto& x : w) oracle += (x.values.bottomRows(23) - phi * x.values.topRows(23)).cwiseAbs().sum();
    oracle /= 600.0 * 23.0;
    EXPECT_NEAR(oracle, s * std::sqrt(2.0 / std::numbers::pi), 0.003);

    metrics::GruOptions opts;
    opts.hidden = 8;
    opts.max_steps = 3000;
    opts.lr = 3e-3;
    const double score = metrics::predictive_run({w, w}, 3, opts);
    EXPECT_GT(score, 0.97 * oracle);
    EXPECT_LT(score, 1.10 * oracle) << "oracle " << oracle;
}

TEST(Predictive, ConstantSeriesArePredictable) {
    std::vector<Matrix> ms(50, Matrix::Constant(12, 2, 0.5));
    const Windows w = from_matrices(ms);
    metrics::GruOptions opts;
    opts.max_steps = 5000;
    EXPECT_LT(metrics::predictive_score({w, w}, 1, 4, opts).mean, 1e-3);
}

TEST(Predictive, DeterministicGivenSeed) {
    const Windows w = data::generate_sines(40, 10, 2, 52);
    metrics::GruOptions opts;
    opts.max_steps = 100;
    EXPECT_EQ(metrics::predictive_run({w, w}, 9, opts), metrics::predictive_run({w, w}, 9, opts));
    const Windows short_w = from_matrices({Matrix::Zero(1, 2), Matrix::Zero(1, 2)});
    EXPECT_THROW(metrics::predictive_run({short_w, short_w}, 1), ArgumentError);
}

TEST(Evaluate, ReportShape) {
    const Windows w = data::generate_sines(120, 8, 2, 53);
    config::EvalConfig cfg;
    cfg.n_runs = 2;
    cfg.max_steps = 50;
    cfg.encoder_steps = 20;
    const auto rep = metrics::evaluate({w, w}, cfg);
    EXPECT_EQ(rep.n_runs, 2);
    EXPECT_EQ(rep.discriminative.runs.size(), 2u);
    EXPECT_EQ(rep.correlational.mean, 0.0);
    EXPECT_LE(rep.context_fid.mean, 1e-6);
    EXPECT_GE(rep.predictive.mean, 0.0);
    EXPECT_TRUE(rep.warnings.empty());
}
