#include "mrf/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "mrf/checkpoint.hpp"
#include "mrf/config.hpp"
#include "mrf/data_io.hpp"
#include "mrf/errors.hpp"
#include "mrf/metrics.hpp"
#include "mrf/model.hpp"
#include "mrf/ops.hpp"
#include "mrf/spectral.hpp"
#include "mrf/training.hpp"

#ifndef MRF_VERSION
#define MRF_VERSION "0.0.0"
#endif

namespace mrf::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Run-directory file names.
constexpr const char* kConfigFile = "config.kv";
constexpr const char* kCheckpointFile = "checkpoint.mrf";
constexpr const char* kHistoryFile = "history.csv";
constexpr const char* kTimingFile = "timings.csv";
constexpr const char* kScalerFile = "scaler.json";
constexpr const char* kManifestFile = "manifest.json";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

KeyValueConfig default_config() {
    KeyValueConfig kv;
    ModelConfig{}.write_to(kv);
    TrainConfig{}.write_to(kv);
    kv.set("data.path", "");
    kv.set("data.has_header", "true");
    kv.set("data.timestamp_col", "auto");
    kv.set("data.split", "0.7,0.1,0.2");
    kv.set("data.train_end", "0");
    kv.set("data.val_end", "0");
    kv.set("data.synth.length", "2000");
    kv.set("data.synth.variates", "1");
    kv.set("data.synth.components", "24:1:0,56:0.5:0");
    kv.set("data.synth.trend", "0");
    kv.set("data.synth.noise_std", "0.1");
    kv.set("data.synth.seed", "0");
    return kv;
}

std::vector<std::string> split_list(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, delim))
        if (!item.empty()) out.push_back(item);
    return out;
}

double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ContractError(what + ": expected a number, got '" + s + "'");
}

SynthSpec synth_spec_from(const KeyValueConfig& kv) {
    SynthSpec spec;
    spec.length = kv.get_uint("data.synth.length");
    spec.variates = kv.get_uint("data.synth.variates");
    spec.trend_slope = kv.get_double("data.synth.trend");
    spec.noise_std = kv.get_double("data.synth.noise_std");
    spec.seed = kv.get_uint("data.synth.seed");
    spec.components.clear();
    for (const auto& item : split_list(kv.get("data.synth.components"), ',')) {
        const auto parts = split_list(item, ':');
        if (parts.empty() || parts.size() > 3)
            throw ContractError("data.synth.components: expected period:amplitude[:phase], got '" + item + "'");
        SineComponent c;
        c.period = to_double(parts[0], "data.synth.components");
        c.amplitude = parts.size() > 1 ? to_double(parts[1], "data.synth.components") : 1.0;
        c.phase = parts.size() > 2 ? to_double(parts[2], "data.synth.components") : 0.0;
        spec.components.push_back(c);
    }
    return spec;
}

CsvOptions sniff_csv(const std::string& text, const KeyValueConfig& kv) {
    CsvOptions opt;
    opt.has_header = kv.get_bool("data.has_header");
    const std::string ts = kv.get("data.timestamp_col");
    if (ts == "auto") {
        std::istringstream is(text);
        std::string line;
        std::size_t skip = opt.has_header ? 1 : 0;
        while (std::getline(is, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            if (skip) {
                --skip;
                continue;
            }
            const std::string first = line.substr(0, line.find(','));
            char* end = nullptr;
            std::strtod(first.c_str(), &end);
            opt.timestamp_col = first.empty() || end != first.c_str() + first.size();
            break;
        }
    } else {
        opt.timestamp_col = kv.get_bool("data.timestamp_col");
    }
    return opt;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

struct LoadedData {
    TimeSeries series;
    std::string source;
    std::string fingerprint;
};

LoadedData load_data(const KeyValueConfig& kv) {
    const std::string path = kv.get("data.path");
    if (path.empty()) throw UsageError("--data is required (a CSV path or 'synth')");
    LoadedData d;
    d.source = path;
    if (path == "synth") {
        d.series = synth_multiperiodic(synth_spec_from(kv));
        d.fingerprint = hex64(fnv1a64(format_csv(d.series)));
    } else {
        if (!fs::exists(path)) throw UsageError("--data: file not found: " + path);
        const std::string text = read_file(path);
        if (text.empty()) throw DataError("csv: empty file " + path);
        d.series = parse_csv(text, sniff_csv(text, kv));
        d.fingerprint = hex64(fnv1a64(text));
    }
    return d;
}

SplitSpec split_spec_from(const KeyValueConfig& kv) {
    SplitSpec s;
    const auto fracs = split_list(kv.get("data.split"), ',');
    if (fracs.size() != 3) throw ContractError("data.split: expected three comma-separated fractions");
    s.train_frac = to_double(fracs[0], "data.split");
    s.val_frac = to_double(fracs[1], "data.split");
    s.test_frac = to_double(fracs[2], "data.split");
    s.train_end = kv.get_uint("data.train_end");
    s.val_end = kv.get_uint("data.val_end");
    return s;
}

ModelConfig model_config_from(const KeyValueConfig& kv) {
    ModelConfig c;
    c.read_from(kv);
    c.validate();
    return c;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
    TrainConfig c;
    c.read_from(kv);
    c.validate();
    return c;
}

json scaler_json(const Standardizer& s, const std::vector<std::string>& names) {
    json j;
    j["variates"] = names;
    j["mean"] = s.mean;
    j["std"] = s.std;
    return j;
}

Standardizer scaler_from_json(const json& j) {
    Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    if (s.mean.size() != s.std.size()) throw CorruptArtifactError("scaler: mean/std length mismatch");
    return s;
}

fs::path default_out_root() {
    if (const char* env = std::getenv("MRF_OUT_DIR"); env && *env) return env;
    return "runs";
}

std::string history_csv(const TrainResult& r) {
    std::string out = "epoch,train_mse,val_mse\n";
    for (const auto& e : r.history)
        out += std::to_string(e.epoch) + "," + format_double(e.train_mse) + "," + format_double(e.val_mse) + "\n";
    return out;
}

std::string timing_csv(const TrainResult& r) {
    std::string out = "epoch,seconds\n";
    for (const auto& e : r.history) out += std::to_string(e.epoch) + "," + format_double(e.seconds) + "\n";
    return out;
}

// Loads the run directory's effective config (exit 4 on corruption).
KeyValueConfig load_run_config(const fs::path& run) {
    if (!fs::is_directory(run)) throw UsageError("--run: not a directory: " + run.string());
    const fs::path p = run / kConfigFile;
    if (!fs::exists(p)) throw CorruptArtifactError("run directory lacks " + std::string(kConfigFile));
    try {
        KeyValueConfig kv = default_config();
        kv.merge(KeyValueConfig::load(p));
        return kv;
    } catch (const ContractError& e) {
        throw CorruptArtifactError(std::string("config: ") + e.what());
    }
}

json load_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw CorruptArtifactError(path.string() + ": " + e.what());
    } catch (const DataError& e) {
        throw CorruptArtifactError(e.what());
    }
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data, config, out, manifest;
    std::map<std::string, std::string> overrides;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    const auto wall0 = std::chrono::steady_clock::now();
    KeyValueConfig kv = default_config();
    std::optional<std::string> expected_fingerprint;
    if (!args.manifest.empty()) {
        const json m = load_json(args.manifest);
        try {
            for (const auto& [k, v] : m.at("config").items()) kv.set(k, v.get<std::string>());
            expected_fingerprint = m.at("dataset").at("fingerprint").get<std::string>();
        } catch (const json::exception& e) {
            throw CorruptArtifactError(std::string("manifest: ") + e.what());
        }
    } else {
        if (!args.config.empty()) kv.merge(KeyValueConfig::load(args.config));
        for (const auto& [k, v] : args.overrides) kv.set(k, v);
        if (!args.data.empty()) kv.set("data.path", args.data);
    }

    const ModelConfig mcfg = model_config_from(kv);
    const TrainConfig tcfg = train_config_from(kv);
    const LoadedData data = load_data(kv);
    if (expected_fingerprint && *expected_fingerprint != data.fingerprint)
        throw CorruptArtifactError("dataset fingerprint " + data.fingerprint + " does not match manifest " +
                                   *expected_fingerprint);

    const DataSplits splits = chrono_split(data.series, split_spec_from(kv));
    const auto train_set = make_windows(splits.train, mcfg.lookback, mcfg.horizon, tcfg.stride);
    const auto val_set = make_windows(splits.val, mcfg.lookback, mcfg.horizon, 1);

    fs::path dir = args.out;
    if (dir.empty())
        dir = default_out_root() / ("run-" + hex64(fnv1a64(kv.to_string() + data.fingerprint)).substr(0, 12));
    fs::create_directories(dir);

    err << "training on " << train_set.size() << " windows, validating on " << val_set.size() << " -> "
        << dir.string() << "\n";
    Model model(mcfg, tcfg.seed);
    const TrainResult result = train(model, train_set, val_set, tcfg);
    for (const auto& e : result.history)
        err << "epoch " << e.epoch << " train_mse " << e.train_mse << " val_mse " << e.val_mse << " (" << e.seconds
            << " s)\n";

    kv.save(dir / kConfigFile);
    save_checkpoint(dir / kCheckpointFile, model.params());
    write_file(dir / kHistoryFile, history_csv(result));
    write_file(dir / kTimingFile, timing_csv(result));
    write_file(dir / kScalerFile, scaler_json(splits.scaler, data.series.variate_names).dump(2) + "\n");

    json manifest;
    manifest["version"] = version_string();
    manifest["command"] = "train";
    manifest["seed"] = tcfg.seed;
    json cfg_json = json::object();
    for (const auto& [k, v] : kv.values()) cfg_json[k] = v;
    manifest["config"] = cfg_json;
    manifest["dataset"] = {{"source", data.source},
                           {"fingerprint", data.fingerprint},
                           {"rows", data.series.length},
                           {"variates", data.series.variates},
                           {"train_end", splits.train_end},
                           {"val_end", splits.val_end}};
    manifest["result"] = {{"best_val_mse", result.best_val_mse},
                          {"best_epoch", result.best_epoch},
                          {"epochs_run", result.history.size()},
                          {"parameters", count_parameters(model.params())}};
    json epoch_seconds = json::array();
    for (const auto& e : result.history) epoch_seconds.push_back(e.seconds);
    manifest["timings"] = {
        {"epoch_seconds", epoch_seconds},
        {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count()}};
    manifest["files"] = {{"config", kConfigFile},   {"checkpoint", kCheckpointFile}, {"history", kHistoryFile},
                         {"timings", kTimingFile}, {"scaler", kScalerFile}};
    write_file(dir / kManifestFile, manifest.dump(2) + "\n");

    out << json({{"run_dir", dir.string()}, {"best_val_mse", result.best_val_mse}}).dump() << "\n";
    return kExitOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string run, split = "test", checkpoint;
    bool per_horizon = false;
    std::size_t season = 0;
    double naive2_smape = 0.0, naive2_mase = 0.0;
};

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream&) {
    const fs::path run = args.run;
    const KeyValueConfig kv = load_run_config(run);
    const ModelConfig mcfg = model_config_from(kv);
    const TrainConfig tcfg = train_config_from(kv);
    const fs::path ckpt = args.checkpoint.empty() ? run / kCheckpointFile : fs::path(args.checkpoint);
    Model model(mcfg, load_checkpoint(ckpt));

    const LoadedData data = load_data(kv);
    const DataSplits splits = chrono_split(data.series, split_spec_from(kv));
    const TimeSeries* part = nullptr;
    if (args.split == "test")
        part = &splits.test;
    else if (args.split == "val")
        part = &splits.val;
    else if (args.split == "train")
        part = &splits.train;
    else
        throw UsageError("--split must be train, val or test");

    const auto samples = make_windows(*part, mcfg.lookback, mcfg.horizon, 1);
    const auto pred = predict(model, samples, tcfg.batch_size);
    const auto target = stack_targets(samples);

    MetricReport report;
    report.mse = mse(pred, target);
    report.mae = mae(pred, target);
    const std::size_t V = part->variates;
    if (args.season > 0) {
        // M4-style: per (window, variate) series on the original scale, then averaged.
        double smape_sum = 0.0, mase_sum = 0.0;
        std::size_t n = 0;
        const std::size_t I = mcfg.lookback, O = mcfg.horizon;
        for (std::size_t s = 0; s < samples.size(); ++s)
            for (std::size_t v = 0; v < V; ++v) {
                std::vector<double> p(O), y(O), hist(I);
                const double mu = splits.scaler.mean[v], sd = splits.scaler.std[v];
                for (std::size_t h = 0; h < O; ++h) {
                    p[h] = pred[(s * O + h) * V + v] * sd + mu;
                    y[h] = target[(s * O + h) * V + v] * sd + mu;
                }
                for (std::size_t t = 0; t < I; ++t) hist[t] = samples[s].x.data()[t * V + v] * sd + mu;
                smape_sum += smape(p, y);
                mase_sum += mase(p, y, hist, args.season);
                ++n;
            }
        report.smape = smape_sum / static_cast<double>(n);
        report.mase = mase_sum / static_cast<double>(n);
        if (args.naive2_smape > 0.0 && args.naive2_mase > 0.0)
            report.owa = owa(*report.smape, *report.mase, args.naive2_smape, args.naive2_mase);
    }
    if (args.per_horizon) {
        report.per_horizon = per_horizon_mse(pred, target, samples.size(), mcfg.horizon, V);
        write_file(run / ("per_horizon_" + args.split + ".csv"), per_horizon_csv(report.per_horizon));
    }
    out << report.to_json() << "\n";
    return kExitOk;
}

// --- forecast ----------------------------------------------------------------

struct ForecastArgs {
    std::string run, input, output;
};

int cmd_forecast(const ForecastArgs& args, std::ostream& out, std::ostream&) {
    const fs::path run = args.run;
    const KeyValueConfig kv = load_run_config(run);
    const ModelConfig mcfg = model_config_from(kv);
    Model model(mcfg, load_checkpoint(run / kCheckpointFile));
    const Standardizer scaler = scaler_from_json(load_json(run / kScalerFile));

    if (!fs::exists(args.input)) throw UsageError("--input: file not found: " + args.input);
    const std::string text = read_file(args.input);
    const TimeSeries input = parse_csv(text, sniff_csv(text, kv));
    if (input.length < mcfg.lookback)
        throw UsageError("--input has " + std::to_string(input.length) + " rows; the model needs the last " +
                         std::to_string(mcfg.lookback));
    if (input.variates != scaler.mean.size())
        throw UsageError("--input has " + std::to_string(input.variates) + " value columns; the model was trained on " +
                         std::to_string(scaler.mean.size()));

    const TimeSeries window = scaler.apply(input.rows(input.length - mcfg.lookback, mcfg.lookback));
    Tensor pred;
    {
        NoGradGuard no_grad;
        pred = model.forward(Tensor({1, mcfg.lookback, window.variates}, window.values), RunMode::eval());
    }
    TimeSeries result;
    result.length = mcfg.horizon;
    result.variates = window.variates;
    result.variate_names = input.variate_names;
    result.values.assign(pred.data().begin(), pred.data().end());
    result = scaler.invert(result);
    const std::string csv = format_csv(result);
    if (args.output.empty())
        out << csv;
    else
        write_file(args.output, csv);
    return kExitOk;
}

// --- detect-periods ----------------------------------------------------------

struct DetectArgs {
    std::string data, config, csv, json_out;
    std::size_t lookback = 336, k = 3, stride = 1;
};

json periodicity_json(const PeriodicitySet& s) {
    return {{"frequencies", s.frequencies}, {"periods", s.periods}, {"amplitudes", s.amplitudes}, {"weights", s.weights}};
}

int cmd_detect(const DetectArgs& args, std::ostream& out, std::ostream&) {
    KeyValueConfig kv = default_config();
    if (!args.config.empty()) kv.merge(KeyValueConfig::load(args.config));
    if (!args.data.empty()) kv.set("data.path", args.data);
    if (args.lookback < 2) throw UsageError("--lookback must be >= 2");
    if (args.k < 1 || args.k > args.lookback / 2) throw UsageError("--resolutions must lie in [1, lookback / 2]");
    if (args.stride < 1) throw UsageError("--stride must be >= 1");
    const LoadedData data = load_data(kv);
    const TimeSeries& ts = data.series;
    if (ts.length < args.lookback)
        throw EmptyDatasetError("series of length " + std::to_string(ts.length) + " is shorter than the look-back");

    std::map<std::size_t, std::size_t> counts;
    std::map<std::size_t, double> weight_mass;
    std::size_t windows = 0, selections = 0;
    std::vector<double> mean_amps(args.lookback / 2, 0.0);
    for (std::size_t start = 0; start + args.lookback <= ts.length; start += args.stride) {
        const std::span<const double> vals(ts.values.data() + start * ts.variates, args.lookback * ts.variates);
        const AmplitudeSpectrum spec = amplitude_spectrum(vals, 1, args.lookback, ts.variates);
        const PeriodicitySet set = detect_salient_periods(spec, args.k);
        for (std::size_t i = 0; i < set.size(); ++i) {
            ++counts[set.periods[i]];
            weight_mass[set.periods[i]] += set.weights[i];
        }
        selections += set.size();
        for (std::size_t f = 0; f < mean_amps.size(); ++f) mean_amps[f] += spec.amps[f];
        ++windows;
    }
    for (auto& a : mean_amps) a /= static_cast<double>(windows);
    AmplitudeSpectrum overall{mean_amps, args.lookback};

    json hist = json::array();
    std::string csv = "period,count,share,weight\n";
    for (const auto& [period, count] : counts) {
        const double share = static_cast<double>(count) / static_cast<double>(selections);
        const double weight = weight_mass[period] / static_cast<double>(windows);
        hist.push_back({{"period", period}, {"count", count}, {"share", share}, {"weight", weight}});
        csv += std::to_string(period) + "," + std::to_string(count) + "," + format_double(share) + "," +
               format_double(weight) + "\n";
    }
    json j;
    j["source"] = data.source;
    j["lookback"] = args.lookback;
    j["k"] = args.k;
    j["stride"] = args.stride;
    j["windows"] = windows;
    j["histogram"] = hist;
    j["mean_spectrum"] = mean_amps;
    j["mean_periodicity"] = periodicity_json(detect_salient_periods(overall, args.k));
    if (!args.csv.empty()) write_file(args.csv, csv);
    if (!args.json_out.empty())
        write_file(args.json_out, j.dump(2) + "\n");
    else
        out << j.dump(2) << "\n";
    return kExitOk;
}

// --- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
    double step = 1e-5;
    bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
    ModelConfig cfg;
    cfg.lookback = 16;
    cfg.horizon = 4;
    cfg.width = 8;
    cfg.blocks = 1;
    cfg.resolutions = 2;
    cfg.heads = 2;
    cfg.ffn_width = 16;
    cfg.dropout = 0.0;
    Model model(cfg, args.seed);

    SynthSpec spec;
    spec.length = 64;
    spec.variates = 2;
    spec.components = {{4.0, 1.0, 0.3}, {8.0, 0.6, 1.1}};
    spec.noise_std = 0.2;
    spec.seed = args.seed;
    const TimeSeries ts = synth_multiperiodic(spec);
    const auto samples = make_windows(ts, cfg.lookback, cfg.horizon, 7);
    const auto [x, y] = make_batch(samples, {0, 1, 2});

    GradCheckOptions opt;
    opt.step = args.step;
    opt.tolerance = args.tolerance;
    opt.seed = args.seed;
    testing::set_gelu_adjoint_fault(args.inject_fault);
    GradCheckReport report;
    try {
        report = gradient_check(model, x, y, opt);
    } catch (...) {
        testing::set_gelu_adjoint_fault(false);
        throw;
    }
    testing::set_gelu_adjoint_fault(false);
    out << report.to_json() << "\n";
    if (!report.passed)
        err << "gradient check failed: worst parameter " << report.worst.parameter << "[" << report.worst.index
            << "] rel. error " << report.max_rel_error << "\n";
    return report.passed ? kExitOk : kExitCheckFailed;
}

template <typename F>
int guarded(F&& body, std::ostream& err) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CorruptArtifactError& e) {
        err << "error: corrupted artifact: " << e.what() << "\n";
        return kExitCorrupt;
    } catch (const NumericError& e) {
        err << "error: numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const EmptyDatasetError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UndefinedMetricError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace

std::string version_string() { return std::string("mrf-") + MRF_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-resolution periodic-patch forecasting engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a model and write a run directory");
    train->add_option("--data", train_args.data, "CSV path or 'synth'");
    train->add_option("--config", train_args.config, "key = value config file");
    train->add_option("--out", train_args.out, "Output directory (default: $MRF_OUT_DIR/run-<hash>)");
    train->add_option("--manifest", train_args.manifest, "Replay a previous run from its manifest.json");
    struct Flag {
        const char* name;
        const char* key;
        const char* help;
    };
    static const Flag value_flags[] = {
        {"--lookback", "model.lookback", "Look-back window I"},
        {"--horizon", "model.horizon", "Forecast horizon O"},
        {"--width", "model.width", "Model width d"},
        {"--blocks", "model.blocks", "Number of blocks N"},
        {"--resolutions", "model.resolutions", "Resolution branches k"},
        {"--heads", "model.heads", "Attention heads"},
        {"--ffn-width", "model.ffn_width", "FFN hidden width"},
        {"--dropout", "model.dropout", "Dropout rate"},
        {"--seed", "train.seed", "Random seed"},
        {"--epochs", "train.epochs", "Maximum epochs"},
        {"--batch", "train.batch_size", "Mini-batch size"},
        {"--lr", "train.learning_rate", "Adam learning rate"},
        {"--patience", "train.patience", "Early-stopping patience"},
        {"--steps-per-epoch", "train.steps_per_epoch", "Cap on batches per epoch (0 = all)"},
    };
    std::map<std::string, std::string> flag_values;
    for (const auto& f : value_flags) train->add_option(f.name, flag_values[f.key], f.help);
    bool no_res_emb = false, block_residual = false;
    train->add_flag("--no-res-emb", no_res_emb, "Disable the resolution embedding");
    train->add_flag("--block-residual", block_residual, "Add a residual around each block");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate a trained run on a split");
    eval->add_option("--run", eval_args.run, "Run directory")->required();
    eval->add_option("--split", eval_args.split, "train, val or test");
    eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint override");
    eval->add_flag("--per-horizon", eval_args.per_horizon, "Write per-step MSE CSV into the run directory");
    eval->add_option("--season", eval_args.season, "Season for sMAPE/MASE (0 = skip)");
    eval->add_option("--naive2-smape", eval_args.naive2_smape, "Naive2 sMAPE reference for OWA");
    eval->add_option("--naive2-mase", eval_args.naive2_mase, "Naive2 MASE reference for OWA");

    ForecastArgs fc_args;
    auto* forecast = app.add_subcommand("forecast", "Forecast the next O steps after an input CSV");
    forecast->add_option("--run", fc_args.run, "Run directory")->required();
    forecast->add_option("--input", fc_args.input, "Input CSV")->required();
    forecast->add_option("--output", fc_args.output, "Output CSV (default: stdout)");

    DetectArgs det_args;
    auto* detect = app.add_subcommand("detect-periods", "Histogram of detected periods over sliding windows");
    detect->add_option("--data", det_args.data, "CSV path or 'synth'");
    detect->add_option("--config", det_args.config, "key = value config file");
    detect->add_option("--lookback", det_args.lookback, "Window length I");
    detect->add_option("--resolutions", det_args.k, "Top-k periods per window");
    detect->add_option("--stride", det_args.stride, "Window stride");
    detect->add_option("--csv", det_args.csv, "Also write the histogram as CSV");
    detect->add_option("--out", det_args.json_out, "Write JSON here instead of stdout");

    GradcheckArgs gc_args;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
    gradcheck->add_option("--seed", gc_args.seed, "Model and data seed");
    gradcheck->add_option("--tolerance", gc_args.tolerance, "Max relative error");
    gradcheck->add_option("--step", gc_args.step, "Finite-difference step");
    gradcheck->add_flag("--inject-fault", gc_args.inject_fault)->group("");  // test-only negative control

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << version_string() << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    if (train->parsed()) {
        for (const auto& [key, value] : flag_values)
            if (!value.empty()) train_args.overrides[key] = value;
        if (no_res_emb) train_args.overrides["model.use_res_emb"] = "false";
        if (block_residual) train_args.overrides["model.block_residual"] = "true";
        return guarded([&] { return cmd_train(train_args, out, err); }, err);
    }
    if (eval->parsed()) return guarded([&] { return cmd_eval(eval_args, out, err); }, err);
    if (forecast->parsed()) return guarded([&] { return cmd_forecast(fc_args, out, err); }, err);
    if (detect->parsed()) return guarded([&] { return cmd_detect(det_args, out, err); }, err);
    if (gradcheck->parsed()) return guarded([&] { return cmd_gradcheck(gc_args, out, err); }, err);
    return kExitUsage;
}

}  // namespace mrf::cli
