#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "pafm/errors.hpp"
#include "pafm/frm_moe.hpp"

using namespace pafm;
using pafm::testing::random_matrix;

namespace {

moe::FrmConfig small_cfg(int m, int k, int d = 6, int h = 10) {
    moe::FrmConfig c;
    c.n_experts = m;
    c.top_k = k;
    c.d_model = d;
    c.d_hidden = h;
    return c;
}

ag::ParameterStore make_store(const moe::FrmConfig& c, std::uint64_t seed) {
    ag::ParameterStore s;
    Rng rng(seed);
    moe::init_frm_params(s, "frm", c, rng);
    return s;
}

// Plain row-wise LayerNorm with the stored affine.
Matrix ln_oracle(const Matrix& x, const ag::ParameterStore& s) {
    const RowVector gamma = s.at("frm.norm.gamma").value;
    const RowVector beta = s.at("frm.norm.beta").value;
    Matrix out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        out.row(i) = ((x.row(i).array() - mu) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(gamma) + beta;
    }
    return out;
}

}  // namespace

TEST(Route, SymmetricScoresSplitEvenly) {
    const auto st = moe::route_scores(Matrix::Zero(1, 2), 2);
    EXPECT_DOUBLE_EQ(st.weights(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(st.weights(0, 1), 0.5);
    EXPECT_EQ(st.selected(0, 0), 0);  // ties go to the lower index
}

TEST(Route, TopTwoOfThree) {
    Matrix s(1, 3);
    s << 1, 2, 3;
    const auto st = moe::route_scores(s, 2);
    EXPECT_EQ(st.selected(0, 0), 2);
    EXPECT_EQ(st.selected(0, 1), 1);
    EXPECT_NEAR(st.weights(0, 0), 0.7311, 1e-4);
    EXPECT_NEAR(st.weights(0, 1), 0.2689, 1e-4);
    const double e = std::exp(1.0);
    EXPECT_NEAR(st.weights(0, 0), e / (e + 1), 1e-15);

    const auto shifted = moe::route_scores(s.array() + 123.4, 2);
    EXPECT_EQ(shifted.selected, st.selected);
    EXPECT_NEAR((shifted.weights - st.weights).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(Route, RowsSumToOneAndDenseLayout) {
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        const auto st = moe::route(random_matrix(7, 5, trial), random_matrix(4, 5, 100 + trial), 1 + trial % 4);
        const Matrix dense = st.dense_weights();
        for (Index i = 0; i < 7; ++i) {
            EXPECT_NEAR(st.weights.row(i).sum(), 1.0, 1e-12);
            EXPECT_NEAR(dense.row(i).sum(), 1.0, 1e-12);
            EXPECT_EQ((dense.row(i).array() > 0).count(), static_cast<Index>(1 + trial % 4));
        }
    }
}

TEST(Route, FullNormalizationKeepsGlobalSoftmax) {
    Matrix s(1, 3);
    s << 1, 2, 3;
    const auto st = moe::route_scores(s, 2, moe::GateNormalization::Full);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    EXPECT_NEAR(st.weights(0, 0), std::exp(3.0) / z, 1e-15);
    EXPECT_NEAR(st.weights(0, 1), std::exp(2.0) / z, 1e-15);
    EXPECT_LT(st.weights.sum(), 1.0);
}

TEST(Route, Errors) {
    EXPECT_THROW(moe::route_scores(Matrix::Zero(2, 3), 4), ConfigError);
    EXPECT_THROW(moe::route(Matrix::Zero(2, 3), Matrix::Zero(2, 4), 1), ArgumentError);
    Matrix bad = Matrix::Zero(1, 2);
    bad(0, 1) = std::nan("");
    EXPECT_THROW(moe::route_scores(bad, 1), NumericError);
    EXPECT_THROW(small_cfg(2, 3).validate(), ConfigError);
}

TEST(Frm, IdenticalExpertsReduceToOne) {
    auto cfg = small_cfg(3, 3);
    auto store = make_store(cfg, 1);
    for (int m = 1; m < 3; ++m) {
        for (const char* part : {".fc1.weight", ".fc1.bias", ".fc2.weight", ".fc2.bias"}) {
            store.at("frm.expert." + std::to_string(m) + part).value = store.at(std::string("frm.expert.0") + part).value;
        }
    }
    const Matrix z = random_matrix(5, 6, 2);
    const Matrix f = moe::expert_forward(z, store, "frm", 0);
    EXPECT_LT((moe::frm_forward(z, store, "frm", cfg) - ln_oracle(z + f, store)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Frm, AllExpertsMatchDenseMixture) {
    auto cfg = small_cfg(4, 4);
    auto store = make_store(cfg, 3);
    const Matrix z = random_matrix(9, 6, 4);
    const Matrix scores = z * store.at("frm.gate.weight").value.transpose();
    Matrix mix = Matrix::Zero(9, 6);
    for (Index i = 0; i < 9; ++i) {
        const RowVector w = (scores.row(i).array() - scores.row(i).maxCoeff()).exp().matrix();
        for (int m = 0; m < 4; ++m) {
            mix.row(i) += w(m) / w.sum() * moe::expert_forward(z.row(i), store, "frm", m);
        }
    }
    EXPECT_LT((moe::frm_forward(z, store, "frm", cfg) - ln_oracle(z + mix, store)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Frm, ExpertPermutationEquivariance) {
    auto cfg = small_cfg(4, 2);
    auto store = make_store(cfg, 5);
    auto perm_store = store;
    const std::vector<int> perm{2, 0, 3, 1};  // expert m moves to slot perm[m]
    Matrix& gate = perm_store.at("frm.gate.weight").value;
    for (int m = 0; m < 4; ++m) {
        gate.row(perm[m]) = store.at("frm.gate.weight").value.row(m);
        for (const char* part : {".fc1.weight", ".fc1.bias", ".fc2.weight", ".fc2.bias"}) {
            perm_store.at("frm.expert." + std::to_string(perm[m]) + part).value =
                store.at("frm.expert." + std::to_string(m) + part).value;
        }
    }
    const Matrix z = random_matrix(12, 6, 6);
    moe::RoutingState a, b;
    const Matrix ya = moe::frm_forward(z, store, "frm", cfg, &a);
    const Matrix yb = moe::frm_forward(z, perm_store, "frm", cfg, &b);
    EXPECT_LT((ya - yb).cwiseAbs().maxCoeff(), 1e-12);
    for (Index i = 0; i < 12; ++i) {
        for (Index j = 0; j < 2; ++j) EXPECT_EQ(b.selected(i, j), perm[a.selected(i, j)]);
    }
}

TEST(Frm, UnselectedExpertIsIrrelevant) {
    auto cfg = small_cfg(3, 1);
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        auto store = make_store(cfg, 7 + trial);
        // Expert 2 shares expert 0's gate row, so it loses every tie and is never chosen.
        store.at("frm.gate.weight").value.row(2) = store.at("frm.gate.weight").value.row(0);
        const Matrix z = random_matrix(6, 6, 100 + trial);
        moe::RoutingState st;
        const Matrix before = moe::frm_forward(z, store, "frm", cfg, &st);
        for (Index i = 0; i < 6; ++i) ASSERT_NE(st.selected(i, 0), 2);
        store.at("frm.expert.2.fc1.weight").value.array() += 3.0;
        store.at("frm.expert.2.fc2.bias").value.array() -= 1.0;
        EXPECT_EQ(moe::frm_forward(z, store, "frm", cfg), before);
    }
}

TEST(Frm, Gradients) {
    for (auto norm : {moe::GateNormalization::Selected, moe::GateNormalization::Full}) {
        auto cfg = small_cfg(3, 2, 4, 6);
        cfg.normalization = norm;
        auto store = make_store(cfg, 9);
        const Matrix z = random_matrix(5, 4, 10);
        const Matrix target = random_matrix(5, 4, 11);
        const auto rep = pafm::testing::param_grad_error(store, [&](ag::Graph& g) {
            return ag::mse(moe::frm_forward(g, g.constant(z), store, "frm", cfg), target);
        });
        EXPECT_LT(rep.worst, 1e-4) << rep.worst_name;
        const double in_err = pafm::testing::input_grad_error(
            [&](ag::Graph& g, const std::vector<ag::Var>& v) { return ag::mse(moe::frm_forward(g, v[0], store, "frm", cfg), target); },
            {z});
        EXPECT_LT(in_err, 1e-6);
    }
}
