#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pafm/matrix.hpp"
#include "pafm/rng.hpp"

namespace pafm::data {

// A loaded multivariate series: rows are time steps, columns are features.
struct RawSeries {
    Matrix values;
    std::vector<std::string> feature_names;
    std::string source_id;
};

// One tau x d training sample, entries in [0, 1] after normalization.
struct TimeSeriesWindow {
    Matrix values;
    long window_index = 0;
};

// Per-feature min/max of the raw series. Features with max == min are
// constant and map to 0.5.
struct NormalizationStats {
    RowVector min;
    RowVector max;

    Index dims() const { return min.size(); }
    bool is_constant(Index j) const { return max(j) == min(j); }
};

struct WindowedData {
    std::vector<TimeSeriesWindow> windows;
    NormalizationStats stats;
};

struct SineParams {
    double frequency = 0.0;
    double phase = 0.0;
};

// Draws the (frequency, phase) pair of one feature of one sample.
using SineParamSampler = std::function<SineParams(Rng&)>;

// Default sampler: frequency ~ U(0, 1), phase ~ U(-pi, pi).
SineParams sample_sine_params(Rng& rng);

// (sin(2*pi*f*step/length + phase) + 1) / 2
double sine_value(const SineParams& p, Index step, Index length);

std::vector<TimeSeriesWindow> generate_sines(long n_samples, long length, long n_features, std::uint64_t seed);
std::vector<TimeSeriesWindow> generate_sines(long n_samples, long length, long n_features, std::uint64_t seed,
                                             const SineParamSampler& sampler);

struct CsvOptions {
    bool has_header = true;
    // Drop columns whose first data cell is not numeric (e.g. a timestamp column).
    bool drop_non_numeric_columns = false;
};

RawSeries load_csv(const std::filesystem::path& path, bool has_header);
RawSeries load_csv(const std::filesystem::path& path, const CsvOptions& opts);
RawSeries parse_csv(std::istream& in, const CsvOptions& opts, const std::string& source_id);

NormalizationStats compute_stats(const Matrix& values);
Matrix normalize(const Matrix& values, const NormalizationStats& stats);
Matrix denormalize(const Matrix& values, const NormalizationStats& stats);
Matrix denormalize(const TimeSeriesWindow& window, const NormalizationStats& stats);

// Number of windows cut from `rows` steps: floor((rows - window_len) / stride) + 1.
long window_count(long rows, long window_len, long stride);
WindowedData window_and_normalize(const RawSeries& series, long window_len, long stride);

// Seeded epoch shuffles over a fixed window set. Batch k of the stream is a
// pure function of (seed, k), so the stream can be repositioned with seek().
class BatchStream {
public:
    BatchStream(std::size_t n_windows, std::size_t batch_size, std::uint64_t seed);

    std::vector<std::size_t> next();
    void seek(std::uint64_t batch_index);
    std::uint64_t position() const { return position_; }
    std::size_t batches_per_epoch() const { return batches_per_epoch_; }

private:
    void load_epoch(std::uint64_t epoch);

    std::size_t n_windows_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t batches_per_epoch_;
    std::uint64_t position_ = 0;
    std::uint64_t loaded_epoch_ = ~std::uint64_t{0};
    std::vector<std::size_t> order_;
};

// Convenience: one epoch of batches over `windows`.
std::vector<std::vector<std::size_t>> batch_iter(const std::vector<TimeSeriesWindow>& windows,
                                                 std::size_t batch_size, std::uint64_t seed);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Seeded shuffle of 0..n-1, first (1 - test_fraction) share goes to train.
Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed);

std::vector<TimeSeriesWindow> select(const std::vector<TimeSeriesWindow>& windows,
                                     const std::vector<std::size_t>& idx);

// Window CSV: sample_id,timestep,f0..f{d-1}; one row per (sample, timestep).
void write_windows_csv(const std::filesystem::path& path, const std::vector<TimeSeriesWindow>& windows);
void write_windows_csv(std::ostream& out, const std::vector<TimeSeriesWindow>& windows);
std::vector<TimeSeriesWindow> read_windows_csv(const std::filesystem::path& path);

// Stats CSV: feature,min,max
void write_stats_csv(const std::filesystem::path& path, const NormalizationStats& stats,
                     const std::vector<std::string>& names = {});
NormalizationStats read_stats_csv(const std::filesystem::path& path);

}  // namespace pafm::data
