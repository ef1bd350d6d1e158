#include "pafm/cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pafm/errors.hpp"
#include "pafm/metrics.hpp"
#include "pafm/sampler.hpp"
#include "pafm/trainer.hpp"

#ifndef PAFM_VERSION
#define PAFM_VERSION "unknown"
#endif

namespace pafm::cli {

namespace fs = std::filesystem;
using config::Json;

std::string version_string() { return PAFM_VERSION; }

// ---- datasets -------------------------------------------------------------------------

Dataset load_dataset(config::ExperimentConfig& cfg) {
    Dataset ds;
    const auto& dc = cfg.data;
    if (dc.is_sines()) {
        ds.windows = data::generate_sines(dc.n_samples, dc.window_len, dc.n_features, derive_seed(dc.split_seed, 0x51e5));
        ds.stats.min = RowVector::Zero(dc.n_features);
        ds.stats.max = RowVector::Ones(dc.n_features);
    } else {
        data::CsvOptions opts;
        opts.has_header = dc.has_header;
        opts.drop_non_numeric_columns = dc.drop_non_numeric_columns;
        const data::RawSeries raw = data::load_csv(dc.source, opts);
        const long dims = static_cast<long>(raw.values.cols());
        if (!cfg.preset.empty() && dims != dc.n_features) {
            throw ConfigError(dc.source + " has " + std::to_string(dims) + " numeric features but preset '" +
                              cfg.preset + "' expects " + std::to_string(dc.n_features));
        }
        cfg.data.n_features = dims;
        data::WindowedData wd = data::window_and_normalize(raw, dc.window_len, dc.stride);
        ds.windows = std::move(wd.windows);
        ds.stats = wd.stats;
        ds.feature_names = raw.feature_names;
    }
    ds.split = data::split_indices(ds.windows.size(), dc.test_fraction, dc.split_seed);
    return ds;
}

Dataset read_dataset_dir(const fs::path& dir, double test_fraction, std::uint64_t split_seed) {
    Dataset ds;
    ds.windows = data::read_windows_csv(dir / "windows.csv");
    if (ds.windows.empty()) throw DataError((dir / "windows.csv").string() + ": no windows");
    ds.stats = data::read_stats_csv(dir / "stats.csv");
    if (ds.stats.dims() != ds.windows.front().values.cols()) {
        throw DataError((dir / "stats.csv").string() + ": feature count does not match windows.csv");
    }
    ds.split = data::split_indices(ds.windows.size(), test_fraction, split_seed);
    return ds;
}

namespace {

// ---- shared plumbing -------------------------------------------------------------------

struct Globals {
    std::string config_path;
    std::vector<std::string> sets;
    std::string preset;
    std::string preset_scale = "paper";
    std::string out_dir = ".";
    std::string sweep;
    long long seed = -1;
};

class Timer {
public:
    void start(const std::string& phase) {
        phase_ = phase;
        t0_ = std::chrono::steady_clock::now();
    }
    void stop(Json& timings) {
        timings[phase_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::string phase_;
    std::chrono::steady_clock::time_point t0_;
};

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + " is not valid JSON: " + e.what());
    }
}

void set_seed_fields(Json& j, std::uint64_t seed) {
    j["data"]["split_seed"] = seed;
    j["train"]["seed"] = seed;
    j["sampler"]["seed"] = seed;
    j["eval"]["seed"] = seed;
}

// Precedence: base (preset / checkpoint) < --config file < --seed < command flags < --set.
config::ExperimentConfig resolve(const Globals& g, const Json* base, const std::vector<std::string>& command_sets) {
    Json j;
    if (base) {
        j = *base;
    } else if (!g.preset.empty()) {
        j = config::to_json(config::make_preset(g.preset, g.preset_scale));
    } else {
        config::ExperimentConfig c;
        c.preset_scale = g.preset_scale;
        j = config::to_json(c);
    }
    if (!g.config_path.empty()) {
        Json file = read_json_file(g.config_path);
        if (!file.is_object()) throw ConfigError(g.config_path + ": config must be a JSON object");
        j.merge_patch(file);
    }
    if (g.seed >= 0) set_seed_fields(j, static_cast<std::uint64_t>(g.seed));
    for (const auto& a : command_sets) config::apply_override(j, a);
    for (const auto& a : g.sets) config::apply_override(j, a);
    return config::from_json(j);
}

std::vector<double> parse_sweep(const std::string& sweep) {
    if (sweep.empty()) return {};
    const auto eq = sweep.find('=');
    if (eq == std::string::npos || sweep.substr(0, eq) != "sigma") {
        throw ConfigError("--sweep supports only sigma=v1,v2,..., got '" + sweep + "'");
    }
    std::vector<double> vals;
    std::stringstream ss(sweep.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size() || !(v >= 0.0)) throw std::invalid_argument(item);
            vals.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("--sweep: '" + item + "' is not a non-negative number");
        }
    }
    if (vals.empty()) throw ConfigError("--sweep: no values given");
    return vals;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Json base_report(const std::string& command, const config::ExperimentConfig& cfg) {
    Json r;
    r["schema_version"] = 1;
    r["command"] = command;
    r["version"] = version_string();
    r["config"] = config::to_json(cfg);
    r["timings"] = Json::object();
    r["outputs"] = Json::object();
    return r;
}

void write_report(const fs::path& path, const Json& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path.string());
    out << report.dump(2) << '\n';
}

Json score_json(const metrics::Score& s) {
    return {{"mean", s.mean}, {"stddev", s.stddev}, {"runs", s.runs}};
}

std::vector<data::TimeSeriesWindow> as_windows(const std::vector<Matrix>& ms) {
    std::vector<data::TimeSeriesWindow> out;
    out.reserve(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i) out.push_back({ms[i], static_cast<long>(i)});
    return out;
}

fs::path ensure_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
    return p;
}

// ---- commands -----------------------------------------------------------------------------

struct PrepareArgs {
    std::string csv;
    long window = 0;
    long stride = 0;
    bool no_header = false;
};

int cmd_prepare(const Globals& g, const PrepareArgs& a, std::ostream& out) {
    std::vector<std::string> sets;
    if (!a.csv.empty()) sets.push_back("data.source=" + a.csv);
    if (a.window > 0) sets.push_back("data.window_len=" + std::to_string(a.window));
    if (a.stride > 0) sets.push_back("data.stride=" + std::to_string(a.stride));
    if (a.no_header) sets.push_back("data.has_header=false");
    config::ExperimentConfig cfg = resolve(g, nullptr, sets);
    const fs::path dir = ensure_dir(g.out_dir);

    Json rep;
    Timer timer;
    timer.start("prepare");
    Dataset ds = load_dataset(cfg);
    rep = base_report("prepare", cfg);
    data::write_windows_csv(dir / "windows.csv", ds.windows);
    data::write_stats_csv(dir / "stats.csv", ds.stats, ds.feature_names);
    data::write_windows_csv(dir / "train_windows.csv", ds.train());
    data::write_windows_csv(dir / "test_windows.csv", ds.test());
    timer.stop(rep["timings"]);
    rep["dataset"] = {{"n_windows", ds.windows.size()},
                      {"n_train", ds.split.train.size()},
                      {"n_test", ds.split.test.size()},
                      {"seq_len", cfg.data.window_len},
                      {"n_features", cfg.data.n_features}};
    for (const char* f : {"windows.csv", "stats.csv", "train_windows.csv", "test_windows.csv"}) {
        rep["outputs"][f] = (dir / f).string();
    }
    write_report(dir / "prepare_report.json", rep);
    out << "prepared " << ds.windows.size() << " windows (" << ds.split.train.size() << " train, "
        << ds.split.test.size() << " test) in " << dir.string() << '\n';
    return kOk;
}

struct TrainArgs {
    std::string data_dir;
    std::string ablation;
    long iters = 0;
    std::string resume;
    long log_every = 100;
};

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
    std::vector<std::string> sets;
    if (!a.ablation.empty()) sets.push_back("train.ablation=" + a.ablation);
    if (a.iters > 0) sets.push_back("train.total_iters=" + std::to_string(a.iters));

    std::unique_ptr<train::Checkpoint> resume;
    Json base;
    if (!a.resume.empty()) {
        resume = std::make_unique<train::Checkpoint>(train::load_checkpoint(a.resume));
        base = config::to_json(resume->config);
    }
    config::ExperimentConfig cfg = resolve(g, resume ? &base : nullptr, sets);
    const fs::path dir = ensure_dir(g.out_dir);

    Json rep;
    Json timings;
    Timer timer;
    timer.start("data");
    Dataset ds = a.data_dir.empty() ? load_dataset(cfg)
                                    : read_dataset_dir(a.data_dir, cfg.data.test_fraction, cfg.data.split_seed);
    if (!a.data_dir.empty()) cfg.data.n_features = ds.windows.front().values.cols();
    if (ds.windows.front().values.rows() != cfg.data.window_len) {
        throw ConfigError("dataset windows have length " + std::to_string(ds.windows.front().values.rows()) +
                          " but data.window_len is " + std::to_string(cfg.data.window_len));
    }
    timer.stop(timings);

    rep = base_report("train", cfg);
    rep["timings"] = timings;
    const net::NetConfig nc = train::build_net_config(cfg);
    rep["parameters"] = net::count_parameters(nc);

    train::TrainOptions opts;
    opts.resume = resume.get();
    opts.normalization = ds.stats;
    opts.on_iter = [&](const train::LossRecord& r) {
        if (a.log_every > 0 && (r.iter % a.log_every == 0 || r.iter == cfg.train.total_iters)) {
            out << "iter " << r.iter << " lr " << r.lr << " loss " << r.loss << '\n';
        }
    };
    timer.start("train");
    train::TrainResult res = train::train(ds.train(), cfg, opts);
    timer.stop(rep["timings"]);

    const fs::path ckpt_path = dir / "checkpoint.bin";
    const fs::path log_path = dir / "loss_log.csv";
    train::save_checkpoint(res.checkpoint, ckpt_path);
    train::write_loss_log(log_path, res.log);
    rep["outputs"]["checkpoint"] = ckpt_path.string();
    rep["outputs"]["loss_log"] = log_path.string();
    rep["train"] = {{"iterations", res.checkpoint.iter},
                    {"final_loss", res.log.empty() ? Json(nullptr) : Json(res.log.back().loss)},
                    {"status", res.ok ? "ok" : "numeric_failure"}};
    if (!res.ok) rep["train"]["failure"] = res.failure;
    write_report(dir / "train_report.json", rep);
    if (!res.ok) {
        out << "training stopped: " << res.failure << " (last finite state saved to " << ckpt_path.string() << ")\n";
        return kNumericError;
    }
    out << "trained " << res.checkpoint.iter << " iterations, checkpoint " << ckpt_path.string() << '\n';
    return kOk;
}

struct SampleArgs {
    std::string checkpoint;
    long n = 1000;
    long steps = 0;
    bool raw = false;
};

train::Checkpoint open_checkpoint(const Globals& g, const std::string& path) {
    return train::load_checkpoint(path.empty() ? (fs::path(g.out_dir) / "checkpoint.bin") : fs::path(path));
}

int cmd_sample(const Globals& g, const SampleArgs& a, std::ostream& out) {
    if (a.n < 1) throw ArgumentError("-n must be >= 1");
    const train::Checkpoint ckpt = open_checkpoint(g, a.checkpoint);
    const Json base = config::to_json(ckpt.config);
    std::vector<std::string> sets;
    if (a.steps > 0) sets.push_back("sampler.n_steps=" + std::to_string(a.steps));
    config::ExperimentConfig cfg = resolve(g, &base, sets);
    const fs::path dir = ensure_dir(g.out_dir);
    Json rep = base_report("sample", cfg);
    auto field = sample::field_from_checkpoint(ckpt);

    std::vector<double> sigmas = parse_sweep(g.sweep);
    const bool sweeping = !sigmas.empty();
    if (!sweeping) sigmas.push_back(cfg.sampler.sigma);
    rep["samples"] = Json::array();
    for (double s : sigmas) {
        config::SamplerConfig sc = cfg.sampler;
        sc.sigma = s;
        Timer timer;
        timer.start(sweeping ? "sample_sigma" + fmt(s) : "sample");
        const std::vector<data::TimeSeriesWindow> ws = as_windows(sample::sample_unconditional(*field, a.n, sc));
        timer.stop(rep["timings"]);
        const std::string name = sweeping ? "samples_sigma" + fmt(s) + ".csv" : "samples.csv";
        data::write_windows_csv(dir / name, ws);
        Json row = {{"sigma", s}, {"n", a.n}, {"n_steps", sc.n_steps}, {"file", (dir / name).string()}};
        if (a.raw && ckpt.normalization.dims() > 0) {
            std::vector<data::TimeSeriesWindow> raw;
            for (const auto& w : ws) raw.push_back({data::denormalize(w, ckpt.normalization), w.window_index});
            const std::string raw_name = "raw_" + name;
            data::write_windows_csv(dir / raw_name, raw);
            row["raw_file"] = (dir / raw_name).string();
        }
        rep["samples"].push_back(row);
        rep["outputs"][name] = (dir / name).string();
        out << "wrote " << a.n << " samples (sigma " << s << ") to " << (dir / name).string() << '\n';
    }
    write_report(dir / "sample_report.json", rep);
    return kOk;
}

struct TaskArgs {
    std::string checkpoint;
    std::string data_dir;
    std::vector<double> ratios;
    std::vector<long> horizons;
    long limit = 0;
    long steps = 0;
};

int cmd_task(const Globals& g, const TaskArgs& a, bool imputation, std::ostream& out) {
    const train::Checkpoint ckpt = open_checkpoint(g, a.checkpoint);
    const Json base = config::to_json(ckpt.config);
    std::vector<std::string> sets;
    if (a.steps > 0) sets.push_back("sampler.n_steps=" + std::to_string(a.steps));
    config::ExperimentConfig cfg = resolve(g, &base, sets);
    const fs::path dir = ensure_dir(g.out_dir);
    const std::string command = imputation ? "impute" : "predict";
    Json rep = base_report(command, cfg);

    Timer timer;
    timer.start("data");
    Dataset ds = a.data_dir.empty() ? load_dataset(cfg)
                                    : read_dataset_dir(a.data_dir, cfg.data.test_fraction, cfg.data.split_seed);
    std::vector<data::TimeSeriesWindow> targets = ds.test();
    if (a.limit > 0 && static_cast<std::size_t>(a.limit) < targets.size()) targets.resize(static_cast<std::size_t>(a.limit));
    timer.stop(rep["timings"]);
    auto field = sample::field_from_checkpoint(ckpt);

    std::vector<double> sigmas = parse_sweep(g.sweep);
    const bool sweeping = !sigmas.empty();
    if (!sweeping) sigmas.push_back(cfg.sampler.sigma);
    rep["tasks"] = Json::array();
    const std::size_t n_settings = imputation ? a.ratios.size() : a.horizons.size();
    if (n_settings == 0) throw ArgumentError(imputation ? "--missing-ratio is required" : "--horizon is required");

    for (double s : sigmas) {
        for (std::size_t k = 0; k < n_settings; ++k) {
            config::SamplerConfig sc = cfg.sampler;
            sc.sigma = s;
            const std::string tag = imputation ? "ratio" + fmt(a.ratios[k]) : "horizon" + std::to_string(a.horizons[k]);
            timer.start(command + "_" + tag + (sweeping ? "_sigma" + fmt(s) : ""));
            const std::vector<sample::TaskResult> res =
                imputation ? sample::impute_all(*field, targets, a.ratios[k], sc, sc.seed)
                           : sample::predict_all(*field, targets, a.horizons[k], sc);
            timer.stop(rep["timings"]);
            std::vector<data::TimeSeriesWindow> outs;
            for (std::size_t i = 0; i < res.size(); ++i) outs.push_back({res[i].output, static_cast<long>(i)});
            const std::string name = command + "_" + tag + (sweeping ? "_sigma" + fmt(s) : "") + ".csv";
            data::write_windows_csv(dir / name, outs);
            const double mse = sample::pooled_mse(res);
            Json row = {{"task", command}, {"sigma", s}, {"mse", mse}, {"n_windows", res.size()}, {"file", (dir / name).string()}};
            if (imputation) row["missing_ratio"] = a.ratios[k];
            else row["horizon"] = a.horizons[k];
            rep["tasks"].push_back(row);
            rep["outputs"][name] = (dir / name).string();
            out << command << ' ' << tag << " sigma " << s << ": mse " << mse << " over " << res.size() << " windows\n";
        }
    }
    write_report(dir / (command + "_report.json"), rep);
    return kOk;
}

struct EvalArgs {
    std::string real;
    std::string synthetic;
    long n_runs = 0;
    bool export_pca = false;
    bool histograms = false;
};

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
    std::vector<std::string> sets;
    if (a.n_runs > 0) sets.push_back("eval.n_runs=" + std::to_string(a.n_runs));
    config::ExperimentConfig cfg = resolve(g, nullptr, sets);
    const fs::path dir = ensure_dir(g.out_dir);
    Json rep = base_report("eval", cfg);

    metrics::EvalPair pair{data::read_windows_csv(a.real), data::read_windows_csv(a.synthetic)};
    try {
        pair.validate();
    } catch (const ArgumentError& e) {
        throw DataError(std::string("eval inputs: ") + e.what());
    }
    Timer timer;
    timer.start("metrics");
    const metrics::MetricReport m = metrics::evaluate(pair, cfg.eval);
    timer.stop(rep["timings"]);
    rep["metrics"] = {{"discriminative", score_json(m.discriminative)},
                      {"predictive", score_json(m.predictive)},
                      {"context_fid", score_json(m.context_fid)},
                      {"correlational", score_json(m.correlational)},
                      {"n_runs", m.n_runs},
                      {"warnings", m.warnings}};
    rep["inputs"] = {{"real", a.real}, {"synthetic", a.synthetic}};
    if (a.export_pca) {
        metrics::write_pca_csv(dir / "pca.csv", pair);
        rep["outputs"]["pca"] = (dir / "pca.csv").string();
    }
    if (a.histograms) {
        metrics::write_histograms_csv(dir / "histograms.csv", metrics::value_histograms(pair));
        rep["outputs"]["histograms"] = (dir / "histograms.csv").string();
    }
    write_report(dir / "eval_report.json", rep);
    out << std::setprecision(6) << "discriminative " << m.discriminative.mean << " +- " << m.discriminative.stddev
        << "\npredictive " << m.predictive.mean << " +- " << m.predictive.stddev << "\ncontext_fid "
        << m.context_fid.mean << " +- " << m.context_fid.stddev << "\ncorrelational " << m.correlational.mean << '\n';
    for (const auto& w : m.warnings) out << "warning: " << w << '\n';
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Perturbation-aware flow matching for multivariate time series"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", version_string());

    Globals g;
    app.add_option("--config", g.config_path, "JSON config file merged over the preset");
    app.add_option("--set", g.sets, "Override config keys, e.g. --set train.sigma=0.2 train.alpha=2")
        ->expected(1, -1)
        ->take_all();
    app.add_option("--seed", g.seed, "Seed for every random stream");
    app.add_option("--out-dir", g.out_dir, "Directory for outputs");
    app.add_option("--preset", g.preset, "Dataset preset: sines, stocks, etth1, mujoco, energy, fmri");
    app.add_option("--preset-scale", g.preset_scale, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--sweep", g.sweep, "Sampler sweep, e.g. sigma=0.05,0.1,0.2");

    PrepareArgs pa;
    auto* prepare = app.add_subcommand("prepare", "Build window, stats and split files");
    prepare->add_option("--csv", pa.csv, "Input CSV");
    prepare->add_option("--window", pa.window, "Window length");
    prepare->add_option("--stride", pa.stride, "Window stride");
    prepare->add_flag("--no-header", pa.no_header, "CSV has no header row");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a velocity field");
    train_cmd->add_option("--data", ta.data_dir, "Prepared dataset directory (default: build from config)");
    train_cmd->add_option("--ablation", ta.ablation, "full, no_frm, no_td, no_td_tpb");
    train_cmd->add_option("--iters", ta.iters, "Total optimizer iterations");
    train_cmd->add_option("--resume", ta.resume, "Continue from a checkpoint");
    train_cmd->add_option("--log-every", ta.log_every, "Print the loss every N iterations (0: quiet)");

    SampleArgs sa;
    auto* sample_cmd = app.add_subcommand("sample", "Generate unconditional samples");
    sample_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint (default: <out-dir>/checkpoint.bin)");
    sample_cmd->add_option("-n", sa.n, "Number of samples");
    sample_cmd->add_option("--steps", sa.steps, "Integration steps");
    sample_cmd->add_flag("--raw", sa.raw, "Also write samples mapped back to the original units");

    TaskArgs ia;
    auto* impute_cmd = app.add_subcommand("impute", "Fill randomly missing entries of test windows");
    impute_cmd->add_option("--checkpoint", ia.checkpoint, "Checkpoint (default: <out-dir>/checkpoint.bin)");
    impute_cmd->add_option("--data", ia.data_dir, "Prepared dataset directory");
    impute_cmd->add_option("--missing-ratio", ia.ratios, "Missing ratio(s) in (0, 1)")->delimiter(',');
    impute_cmd->add_option("--limit", ia.limit, "Use at most N test windows");
    impute_cmd->add_option("--steps", ia.steps, "Integration steps");

    TaskArgs pr;
    auto* predict_cmd = app.add_subcommand("predict", "Forecast the last steps of test windows");
    predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint (default: <out-dir>/checkpoint.bin)");
    predict_cmd->add_option("--data", pr.data_dir, "Prepared dataset directory");
    predict_cmd->add_option("--horizon", pr.horizons, "Forecast horizon(s)")->delimiter(',');
    predict_cmd->add_option("--limit", pr.limit, "Use at most N test windows");
    predict_cmd->add_option("--steps", pr.steps, "Integration steps");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Score synthetic windows against real ones");
    eval_cmd->add_option("--real", ea.real, "Real windows CSV")->required();
    eval_cmd->add_option("--synthetic", ea.synthetic, "Synthetic windows CSV")->required();
    eval_cmd->add_option("--n-runs", ea.n_runs, "Runs per score");
    eval_cmd->add_flag("--export-pca", ea.export_pca, "Write pca.csv");
    eval_cmd->add_flag("--histograms", ea.histograms, "Write histograms.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kArgError;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(g, pa, out);
        if (train_cmd->parsed()) return cmd_train(g, ta, out);
        if (sample_cmd->parsed()) return cmd_sample(g, sa, out);
        if (impute_cmd->parsed()) return cmd_task(g, ia, true, out);
        if (predict_cmd->parsed()) return cmd_task(g, pr, false, out);
        if (eval_cmd->parsed()) return cmd_eval(g, ea, out);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << '\n';
        return kArgError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kArgError;
    } catch (const FormatError& e) {
        err << "data error: " << e.what() << " (row " << e.row() << ", column " << e.col() << ")\n";
        return kDataError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << '\n';
        return kDataError;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumericError;
    }
    return kArgError;
}

}  // namespace pafm::cli
