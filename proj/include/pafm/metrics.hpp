#pragma once

// Generation-quality scores: discriminative (post-hoc classifier),
// predictive (train on synthetic, test on real), context-FID over a learned
// encoder, and correlational alignment, plus PCA / histogram exports.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pafm/autograd.hpp"
#include "pafm/config.hpp"
#include "pafm/data.hpp"
#include "pafm/matrix.hpp"

namespace pafm::metrics {

using Windows = std::vector<data::TimeSeriesWindow>;

struct EvalPair {
    Windows real;
    Windows synthetic;

    Index seq_len() const;
    Index n_features() const;
    // Throws ArgumentError on empty sets or mismatched shapes.
    void validate() const;
};

struct Score {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> runs;
};

Score summarize(std::vector<double> runs);

// ---- recurrent models --------------------------------------------------------------

struct GruOptions {
    int layers = 2;
    int hidden = 0;  // 0: number of features
    long max_steps = 5000;
    long batch_size = 128;
    double lr = 1e-3;
    long eval_every = 50;
    long patience = 10;  // evaluations without validation improvement
};

// Stacked GRU over windows; parameters under "gru.<layer>.{ih,hh}" and "head".
class GruNet {
public:
    GruNet(Index in_features, int hidden, int layers, Index out_features, std::uint64_t seed);

    // Batch of windows stacked sample-major (B*tau x d). Returns per-step
    // hidden states of the last layer, one (B x hidden) var per timestep.
    std::vector<ag::Var> run(ag::Graph& g, const std::vector<Matrix>& steps) const;
    ag::Var head(ag::Graph& g, const ag::Var& h) const;

    ag::ParameterStore& params() { return params_; }

private:
    Index in_;
    int hidden_;
    int layers_;
    mutable ag::ParameterStore params_;
};

// Time-major view of windows: element t is (B x d) with row b = windows[idx[b]] at step t.
std::vector<Matrix> time_steps(const Windows& windows, const std::vector<std::size_t>& idx);

double discriminative_run(const EvalPair& pair, std::uint64_t seed, const GruOptions& opts = {});
Score discriminative_score(const EvalPair& pair, long n_runs, std::uint64_t seed, const GruOptions& opts = {});

double predictive_run(const EvalPair& pair, std::uint64_t seed, const GruOptions& opts = {});
Score predictive_score(const EvalPair& pair, long n_runs, std::uint64_t seed, const GruOptions& opts = {});

// ---- context-FID ------------------------------------------------------------------------

struct EncoderOptions {
    int dim = 64;
    int kernel = 3;
    std::vector<int> dilations = {1, 2, 4};
    long steps = 1500;
    long batch_size = 64;
    double lr = 1e-3;
};

// Causal dilated convolutions trained to predict the next step; a window's
// representation is its time-averaged last hidden state.
class FeatureEncoder {
public:
    FeatureEncoder(Index seq_len, Index n_features, EncoderOptions opts, std::uint64_t seed);

    Matrix encode(const Windows& windows) const;
    Index dim() const { return opts_.dim; }

    // One next-step regression pass over a batch; used by training.
    ag::Var hidden(ag::Graph& g, const ag::Var& x, Index batch) const;
    ag::Var predict(ag::Graph& g, const ag::Var& h) const;
    ag::ParameterStore& params() { return params_; }

private:
    Index seq_len_;
    Index n_features_;
    EncoderOptions opts_;
    mutable ag::ParameterStore params_;
};

FeatureEncoder train_feature_encoder(const Windows& real, const EncoderOptions& opts, std::uint64_t seed);

// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}); rows are observations.
double frechet_distance(const Matrix& a, const Matrix& b, double ridge = 1e-6);

double context_fid(const EvalPair& pair, const FeatureEncoder& encoder);
Score context_fid_score(const EvalPair& pair, long n_runs, std::uint64_t seed, const EncoderOptions& opts = {});

// ---- correlations --------------------------------------------------------------------------

struct CorrelationalResult {
    double score = 0.0;
    std::vector<Index> degenerate_real;       // zero-variance features
    std::vector<Index> degenerate_synthetic;
};

// All timesteps of all windows stacked: (N*tau x d).
Matrix pool_time(const Windows& windows);
Matrix correlation_matrix(const Matrix& pooled, std::vector<Index>* degenerate = nullptr);
CorrelationalResult correlational_score(const EvalPair& pair);

// ---- PCA / histograms ----------------------------------------------------------------------------

struct Pca {
    RowVector mean;
    Matrix components;  // k x D, rows orthonormal, by decreasing variance
    Vector variance;    // k explained variances
};

Matrix flatten(const Windows& windows);
Pca fit_pca(const Matrix& rows, Index n_components);
Matrix pca_project(const Pca& pca, const Matrix& rows);
Matrix pca_reconstruct(const Pca& pca, const Matrix& scores);

void write_pca_csv(const std::filesystem::path& path, const EvalPair& pair, Index n_components = 2);

struct Histogram {
    Index feature = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<long> real;
    std::vector<long> synthetic;
};

std::vector<Histogram> value_histograms(const EvalPair& pair, int bins = 50);
void write_histograms_csv(const std::filesystem::path& path, const std::vector<Histogram>& hists);

// ---- combined ------------------------------------------------------------------------------------

struct MetricReport {
    Score discriminative;
    Score predictive;
    Score context_fid;
    Score correlational;
    long n_runs = 0;
    std::vector<std::string> warnings;
};

MetricReport evaluate(const EvalPair& pair, const config::EvalConfig& cfg);

}  // namespace pafm::metrics
