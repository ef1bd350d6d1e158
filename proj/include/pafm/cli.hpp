#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pafm/config.hpp"
#include "pafm/data.hpp"

namespace pafm::cli {

enum ExitCode : int { kOk = 0, kArgError = 2, kDataError = 3, kNumericError = 4 };

// A dataset as every command sees it: windows in [0, 1], the stats that map
// them back, and the seeded train/test split.
struct Dataset {
    std::vector<data::TimeSeriesWindow> windows;
    data::NormalizationStats stats;
    std::vector<std::string> feature_names;
    data::Split split;

    std::vector<data::TimeSeriesWindow> train() const { return data::select(windows, split.train); }
    std::vector<data::TimeSeriesWindow> test() const { return data::select(windows, split.test); }
};

// Builds the dataset named by cfg.data; fills cfg.data.n_features from a CSV.
Dataset load_dataset(config::ExperimentConfig& cfg);

// Reads a prepared dataset directory (windows.csv, stats.csv); the split is
// recomputed from the seed.
Dataset read_dataset_dir(const std::filesystem::path& dir, double test_fraction, std::uint64_t split_seed);

std::string version_string();

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pafm::cli
