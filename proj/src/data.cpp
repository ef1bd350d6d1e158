#include "pafm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "pafm/errors.hpp"

namespace pafm::data {

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

// ---- sines ---------------------------------------------------------------------

SineParams sample_sine_params(Rng& rng) {
    SineParams p;
    p.frequency = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    p.phase = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
    return p;
}

double sine_value(const SineParams& p, Index step, Index length) {
    const double arg = 2.0 * std::numbers::pi * p.frequency * static_cast<double>(step) / static_cast<double>(length) +
                       p.phase;
    return 0.5 * (std::sin(arg) + 1.0);
}

std::vector<TimeSeriesWindow> generate_sines(long n_samples, long length, long n_features, std::uint64_t seed) {
    return generate_sines(n_samples, length, n_features, seed, sample_sine_params);
}

std::vector<TimeSeriesWindow> generate_sines(long n_samples, long length, long n_features, std::uint64_t seed,
                                             const SineParamSampler& sampler) {
    if (n_samples < 1) throw ArgumentError("generate_sines: n_samples must be >= 1");
    if (length < 2) throw ArgumentError("generate_sines: length must be >= 2");
    if (n_features < 1) throw ArgumentError("generate_sines: n_features must be >= 1");
    Rng rng(seed);
    std::vector<TimeSeriesWindow> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    std::vector<SineParams> params(static_cast<std::size_t>(n_features));
    for (long s = 0; s < n_samples; ++s) {
        for (auto& p : params) p = sampler(rng);
        TimeSeriesWindow w;
        w.window_index = s;
        w.values.resize(length, n_features);
        for (long i = 0; i < length; ++i) {
            for (long j = 0; j < n_features; ++j) w.values(i, j) = sine_value(params[static_cast<std::size_t>(j)], i, length);
        }
        out.push_back(std::move(w));
    }
    return out;
}

// ---- CSV ingestion ---------------------------------------------------------------

RawSeries load_csv(const std::filesystem::path& path, bool has_header) {
    CsvOptions opts;
    opts.has_header = has_header;
    return load_csv(path, opts);
}

RawSeries load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file: " + path.string());
    return parse_csv(in, opts, path.string());
}

RawSeries parse_csv(std::istream& in, const CsvOptions& opts, const std::string& source_id) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        lines.push_back(line);
    }
    if (lines.empty()) throw FormatError(source_id + ": empty file", 0, 0);

    std::size_t first_data = 0;
    std::vector<std::string> header;
    if (opts.has_header) {
        for (auto cell : split_line(lines[0])) header.emplace_back(trim(cell));
        first_data = 1;
    }
    if (lines.size() <= first_data) throw FormatError(source_id + ": no data rows", 1, 0);

    const auto first_cells = split_line(lines[first_data]);
    const std::size_t n_cols = first_cells.size();
    if (opts.has_header && header.size() != n_cols) {
        throw FormatError(source_id + ": header has " + std::to_string(header.size()) + " columns but row " +
                              std::to_string(first_data + 1) + " has " + std::to_string(n_cols),
                          static_cast<long>(first_data + 1), 0);
    }

    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < n_cols; ++c) {
        double v = 0.0;
        if (opts.drop_non_numeric_columns && !parse_double(first_cells[c], v)) continue;
        keep.push_back(c);
    }
    if (keep.empty()) throw FormatError(source_id + ": no numeric columns", static_cast<long>(first_data + 1), 0);

    const std::size_t n_rows = lines.size() - first_data;
    RawSeries series;
    series.source_id = source_id;
    series.values.resize(static_cast<Index>(n_rows), static_cast<Index>(keep.size()));
    for (std::size_t r = 0; r < n_rows; ++r) {
        const long file_row = static_cast<long>(first_data + r + 1);
        const auto cells = split_line(lines[first_data + r]);
        if (cells.size() != n_cols) {
            throw FormatError(source_id + ": row " + std::to_string(file_row) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(n_cols),
                              file_row, static_cast<long>(cells.size()));
        }
        for (std::size_t k = 0; k < keep.size(); ++k) {
            double v = 0.0;
            const std::size_t c = keep[k];
            if (!parse_double(cells[c], v) || !std::isfinite(v)) {
                throw FormatError(source_id + ": non-numeric or non-finite cell '" + std::string(trim(cells[c])) +
                                      "' at row " + std::to_string(file_row) + ", column " + std::to_string(c + 1),
                                  file_row, static_cast<long>(c + 1));
            }
            series.values(static_cast<Index>(r), static_cast<Index>(k)) = v;
        }
    }
    for (std::size_t k = 0; k < keep.size(); ++k) {
        series.feature_names.push_back(opts.has_header ? header[keep[k]] : "f" + std::to_string(k));
    }
    return series;
}

// ---- normalization ------------------------------------------------------------------

NormalizationStats compute_stats(const Matrix& values) {
    if (values.rows() < 1 || values.cols() < 1) throw ArgumentError("compute_stats: empty matrix");
    NormalizationStats s;
    s.min = values.colwise().minCoeff();
    s.max = values.colwise().maxCoeff();
    return s;
}

Matrix normalize(const Matrix& values, const NormalizationStats& stats) {
    if (values.cols() != stats.dims()) throw ArgumentError("normalize: feature count does not match stats");
    Matrix out(values.rows(), values.cols());
    for (Index j = 0; j < values.cols(); ++j) {
        if (stats.is_constant(j)) {
            out.col(j).setConstant(0.5);
        } else {
            const double range = stats.max(j) - stats.min(j);
            out.col(j) = (values.col(j).array() - stats.min(j)) / range;
        }
    }
    return out;
}

Matrix denormalize(const Matrix& values, const NormalizationStats& stats) {
    if (values.cols() != stats.dims()) {
        throw ArgumentError("denormalize: window has " + std::to_string(values.cols()) + " features, stats have " +
                            std::to_string(stats.dims()));
    }
    Matrix out(values.rows(), values.cols());
    for (Index j = 0; j < values.cols(); ++j) {
        if (stats.is_constant(j)) {
            out.col(j).setConstant(stats.min(j));
        } else {
            out.col(j) = values.col(j).array() * (stats.max(j) - stats.min(j)) + stats.min(j);
        }
    }
    return out;
}

Matrix denormalize(const TimeSeriesWindow& window, const NormalizationStats& stats) {
    return denormalize(window.values, stats);
}

long window_count(long rows, long window_len, long stride) {
    if (window_len < 1 || stride < 1) throw ArgumentError("window_count: window_len and stride must be >= 1");
    if (window_len > rows) return 0;
    return (rows - window_len) / stride + 1;
}

WindowedData window_and_normalize(const RawSeries& series, long window_len, long stride) {
    const long rows = static_cast<long>(series.values.rows());
    if (stride < 1) throw ArgumentError("window_and_normalize: stride must be >= 1");
    if (window_len < 1) throw ArgumentError("window_and_normalize: window_len must be >= 1");
    if (window_len > rows) {
        throw ArgumentError("window_and_normalize: window_len " + std::to_string(window_len) + " exceeds " +
                            std::to_string(rows) + " rows");
    }
    if (!series.values.allFinite()) throw DataError("window_and_normalize: series contains non-finite values");
    WindowedData out;
    out.stats = compute_stats(series.values);
    const Matrix normed = normalize(series.values, out.stats);
    const long n = window_count(rows, window_len, stride);
    out.windows.reserve(static_cast<std::size_t>(n));
    for (long w = 0; w < n; ++w) {
        TimeSeriesWindow win;
        win.window_index = w;
        win.values = normed.middleRows(w * stride, window_len);
        out.windows.push_back(std::move(win));
    }
    return out;
}

// ---- batching ----------------------------------------------------------------------

BatchStream::BatchStream(std::size_t n_windows, std::size_t batch_size, std::uint64_t seed)
    : n_windows_(n_windows), batch_size_(batch_size), seed_(seed) {
    if (n_windows == 0) throw ArgumentError("BatchStream: empty window list");
    if (batch_size == 0) throw ArgumentError("BatchStream: batch_size must be >= 1");
    batches_per_epoch_ = (n_windows + batch_size - 1) / batch_size;
}

void BatchStream::load_epoch(std::uint64_t epoch) {
    if (epoch == loaded_epoch_) return;
    order_.resize(n_windows_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, 0xba7c4ULL, epoch));
    std::shuffle(order_.begin(), order_.end(), rng);
    loaded_epoch_ = epoch;
}

std::vector<std::size_t> BatchStream::next() {
    const std::uint64_t epoch = position_ / batches_per_epoch_;
    const std::size_t k = static_cast<std::size_t>(position_ % batches_per_epoch_);
    load_epoch(epoch);
    const std::size_t begin = k * batch_size_;
    const std::size_t end = std::min(begin + batch_size_, n_windows_);
    ++position_;
    return {order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(end)};
}

void BatchStream::seek(std::uint64_t batch_index) { position_ = batch_index; }

std::vector<std::vector<std::size_t>> batch_iter(const std::vector<TimeSeriesWindow>& windows,
                                                 std::size_t batch_size, std::uint64_t seed) {
    BatchStream stream(windows.size(), batch_size, seed);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < stream.batches_per_epoch(); ++i) out.push_back(stream.next());
    return out;
}

Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
    if (n < 2) throw ArgumentError("split_indices: need at least 2 items");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ArgumentError("split_indices: test_fraction must be in (0, 1)");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x5b117ULL));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    Split s;
    s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
    s.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<TimeSeriesWindow> select(const std::vector<TimeSeriesWindow>& windows, const std::vector<std::size_t>& idx) {
    std::vector<TimeSeriesWindow> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(windows.at(i));
    return out;
}

// ---- window / stats files -------------------------------------------------------------

void write_windows_csv(std::ostream& out, const std::vector<TimeSeriesWindow>& windows) {
    const Index d = windows.empty() ? 0 : windows.front().values.cols();
    out << "sample_id,timestep";
    for (Index j = 0; j < d; ++j) out << ",f" << j;
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t s = 0; s < windows.size(); ++s) {
        const Matrix& v = windows[s].values;
        if (v.cols() != d) throw ArgumentError("write_windows_csv: windows have differing feature counts");
        for (Index i = 0; i < v.rows(); ++i) {
            out << s << ',' << i;
            for (Index j = 0; j < d; ++j) out << ',' << v(i, j);
            out << '\n';
        }
    }
}

void write_windows_csv(const std::filesystem::path& path, const std::vector<TimeSeriesWindow>& windows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write windows file: " + path.string());
    write_windows_csv(out, windows);
    if (!out) throw DataError("write failed: " + path.string());
}

std::vector<TimeSeriesWindow> read_windows_csv(const std::filesystem::path& path) {
    RawSeries table = load_csv(path, true);
    if (table.values.cols() < 3 || table.feature_names[0] != "sample_id" || table.feature_names[1] != "timestep") {
        throw FormatError(path.string() + ": expected header sample_id,timestep,f0..", 1, 1);
    }
    const Index d = table.values.cols() - 2;
    std::map<long, std::vector<std::pair<long, Index>>> rows_by_sample;
    for (Index r = 0; r < table.values.rows(); ++r) {
        const double sid = table.values(r, 0);
        const double ts = table.values(r, 1);
        if (sid != std::floor(sid) || ts != std::floor(ts) || sid < 0 || ts < 0) {
            throw FormatError(path.string() + ": sample_id/timestep must be non-negative integers at row " +
                                  std::to_string(r + 2),
                              static_cast<long>(r + 2), 1);
        }
        rows_by_sample[static_cast<long>(sid)].emplace_back(static_cast<long>(ts), r);
    }
    std::vector<TimeSeriesWindow> out;
    out.reserve(rows_by_sample.size());
    Index tau = -1;
    for (auto& [sid, rows] : rows_by_sample) {
        std::sort(rows.begin(), rows.end());
        if (tau < 0) tau = static_cast<Index>(rows.size());
        if (static_cast<Index>(rows.size()) != tau) {
            throw FormatError(path.string() + ": sample " + std::to_string(sid) + " has " +
                                  std::to_string(rows.size()) + " timesteps, expected " + std::to_string(tau),
                              static_cast<long>(rows.front().second + 2), 2);
        }
        TimeSeriesWindow w;
        w.window_index = sid;
        w.values.resize(tau, d);
        for (Index i = 0; i < tau; ++i) {
            if (rows[static_cast<std::size_t>(i)].first != i) {
                throw FormatError(path.string() + ": sample " + std::to_string(sid) + " timesteps are not 0..tau-1",
                                  static_cast<long>(rows[static_cast<std::size_t>(i)].second + 2), 2);
            }
            w.values.row(i) = table.values.row(rows[static_cast<std::size_t>(i)].second).tail(d);
        }
        out.push_back(std::move(w));
    }
    return out;
}

void write_stats_csv(const std::filesystem::path& path, const NormalizationStats& stats,
                     const std::vector<std::string>& names) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write stats file: " + path.string());
    out << "feature,min,max\n";
    for (Index j = 0; j < stats.dims(); ++j) {
        const std::string name = j < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(j)] : "f" + std::to_string(j);
        out << name << ',' << format_double(stats.min(j)) << ',' << format_double(stats.max(j)) << '\n';
    }
}

NormalizationStats read_stats_csv(const std::filesystem::path& path) {
    CsvOptions opts;
    opts.has_header = true;
    opts.drop_non_numeric_columns = true;
    RawSeries t = load_csv(path, opts);
    if (t.values.cols() != 2) throw FormatError(path.string() + ": expected feature,min,max", 1, 1);
    NormalizationStats s;
    s.min = t.values.col(0).transpose();
    s.max = t.values.col(1).transpose();
    for (Index j = 0; j < s.dims(); ++j) {
        if (s.max(j) < s.min(j)) throw FormatError(path.string() + ": max < min", static_cast<long>(j + 2), 3);
    }
    return s;
}

}  // namespace pafm::data
