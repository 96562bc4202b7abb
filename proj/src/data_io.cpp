#include "mrf/data_io.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "mrf/config.hpp"
#include "mrf/errors.hpp"

namespace mrf {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, delim)) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        const auto b = cell.find_first_not_of(' ');
        cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b));
    }
    if (!line.empty() && line.back() == delim) cells.emplace_back();
    return cells;
}

}  // namespace

TimeSeries TimeSeries::rows(std::size_t begin, std::size_t count) const {
    if (begin + count > length) throw ContractError("TimeSeries::rows out of range");
    TimeSeries out;
    out.length = count;
    out.variates = variates;
    out.variate_names = variate_names;
    out.ground_truth_periods = ground_truth_periods;
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * variates),
                      values.begin() + static_cast<std::ptrdiff_t>((begin + count) * variates));
    if (!timestamps.empty())
        out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                              timestamps.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
}

TimeSeries parse_csv(const std::string& text, const CsvOptions& options) {
    std::istringstream is(text);
    std::string line;
    TimeSeries ts;
    std::size_t row = 0;
    const std::size_t skip = options.timestamp_col ? 1 : 0;
    bool header_pending = options.has_header;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto cells = split_line(line, options.delimiter);
        if (header_pending) {
            header_pending = false;
            if (cells.size() <= skip) throw DataError("csv row " + std::to_string(row) + ": header has no value columns");
            ts.variate_names.assign(cells.begin() + static_cast<std::ptrdiff_t>(skip), cells.end());
            continue;
        }
        if (cells.size() <= skip) throw DataError("csv row " + std::to_string(row) + ": no value columns");
        const std::size_t nv = cells.size() - skip;
        if (ts.variates == 0) {
            ts.variates = nv;
        } else if (nv != ts.variates) {
            throw DataError("csv row " + std::to_string(row) + ": expected " + std::to_string(ts.variates) +
                            " value columns, found " + std::to_string(nv));
        }
        if (options.timestamp_col) ts.timestamps.push_back(cells[0]);
        for (std::size_t c = skip; c < cells.size(); ++c) {
            const std::string& s = cells[c];
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
                throw DataError("csv row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                                ": invalid value '" + s + "'");
            ts.values.push_back(v);
        }
        ++ts.length;
    }
    if (ts.length == 0) throw DataError("csv: no data rows");
    if (!ts.variate_names.empty() && ts.variate_names.size() != ts.variates)
        throw DataError("csv: header names " + std::to_string(ts.variate_names.size()) + " columns, data has " +
                        std::to_string(ts.variates));
    if (ts.variate_names.empty())
        for (std::size_t v = 0; v < ts.variates; ++v) ts.variate_names.push_back("v" + std::to_string(v));
    return ts;
}

TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (buf.str().empty()) throw DataError("csv: empty file " + path.string());
    return parse_csv(buf.str(), options);
}

std::string format_csv(const TimeSeries& ts, char delimiter) {
    std::string out;
    const bool stamps = !ts.timestamps.empty();
    if (!ts.variate_names.empty()) {
        if (stamps) out += std::string("date") + delimiter;
        for (std::size_t v = 0; v < ts.variates; ++v) {
            if (v) out += delimiter;
            out += ts.variate_names[v];
        }
        out += '\n';
    }
    for (std::size_t t = 0; t < ts.length; ++t) {
        if (stamps) out += ts.timestamps[t] + delimiter;
        for (std::size_t v = 0; v < ts.variates; ++v) {
            if (v) out += delimiter;
            out += format_double(ts.at(t, v));
        }
        out += '\n';
    }
    return out;
}

void save_csv(const std::filesystem::path& path, const TimeSeries& ts, char delimiter) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_csv(ts, delimiter);
}

void SplitSpec::validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0) throw ContractError("split fractions must be >= 0");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) throw ContractError("split fractions must sum to 1");
}

Standardizer Standardizer::fit(const TimeSeries& ts) {
    if (ts.length == 0) throw EmptyDatasetError("cannot fit standardizer on empty series");
    Standardizer s;
    s.mean.assign(ts.variates, 0.0);
    s.std.assign(ts.variates, 0.0);
    for (std::size_t t = 0; t < ts.length; ++t)
        for (std::size_t v = 0; v < ts.variates; ++v) s.mean[v] += ts.at(t, v);
    for (auto& m : s.mean) m /= static_cast<double>(ts.length);
    for (std::size_t t = 0; t < ts.length; ++t)
        for (std::size_t v = 0; v < ts.variates; ++v) {
            const double c = ts.at(t, v) - s.mean[v];
            s.std[v] += c * c;
        }
    for (auto& sd : s.std) {
        sd = std::sqrt(sd / static_cast<double>(ts.length));
        if (sd == 0.0) sd = 1.0;
    }
    return s;
}

TimeSeries Standardizer::apply(const TimeSeries& ts) const {
    TimeSeries out = ts;
    for (std::size_t t = 0; t < ts.length; ++t)
        for (std::size_t v = 0; v < ts.variates; ++v)
            out.values[t * ts.variates + v] = (ts.at(t, v) - mean[v]) / std[v];
    return out;
}

TimeSeries Standardizer::invert(const TimeSeries& ts) const {
    TimeSeries out = ts;
    for (std::size_t t = 0; t < ts.length; ++t)
        for (std::size_t v = 0; v < ts.variates; ++v)
            out.values[t * ts.variates + v] = ts.at(t, v) * std[v] + mean[v];
    return out;
}

DataSplits chrono_split(const TimeSeries& ts, const SplitSpec& spec) {
    const std::size_t T = ts.length;
    std::size_t train_end = 0, val_end = 0;
    if (spec.train_end != 0 || spec.val_end != 0) {
        train_end = spec.train_end;
        val_end = spec.val_end;
        if (!(train_end <= val_end && val_end <= T)) throw ContractError("split boundaries must satisfy 0 <= train_end <= val_end <= T");
    } else {
        spec.validate();
        const auto cut = [T](double frac) {
            return static_cast<std::size_t>(std::floor(static_cast<double>(T) * frac + 1e-9));
        };
        train_end = cut(spec.train_frac);
        val_end = cut(spec.train_frac + spec.val_frac);
        val_end = std::min(val_end, T);
    }
    if (train_end == 0) throw EmptyDatasetError("training split is empty");
    DataSplits out;
    out.train_end = train_end;
    out.val_end = val_end;
    const TimeSeries raw_train = ts.rows(0, train_end);
    out.scaler = Standardizer::fit(raw_train);
    out.train = out.scaler.apply(raw_train);
    out.val = out.scaler.apply(ts.rows(train_end, val_end - train_end));
    out.test = out.scaler.apply(ts.rows(val_end, T - val_end));
    return out;
}

TimeSeries synth_multiperiodic(const SynthSpec& spec) {
    double max_period = 0.0;
    for (const auto& c : spec.components) {
        if (c.period < 2.0) throw ContractError("synth: periods must be >= 2");
        max_period = std::max(max_period, c.period);
    }
    if (spec.length < 1 || static_cast<double>(spec.length) < max_period)
        throw ContractError("synth: length must cover the longest period");
    if (spec.variates < 1) throw ContractError("synth: need at least one variate");
    TimeSeries ts;
    ts.length = spec.length;
    ts.variates = spec.variates;
    ts.values.resize(spec.length * spec.variates);
    for (std::size_t v = 0; v < spec.variates; ++v) ts.variate_names.push_back("v" + std::to_string(v));
    for (const auto& c : spec.components) ts.ground_truth_periods.push_back(c.period);

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t t = 0; t < spec.length; ++t) {
        double clean = spec.trend_slope * static_cast<double>(t);
        for (const auto& c : spec.components)
            clean += c.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / c.period + c.phase);
        for (std::size_t v = 0; v < spec.variates; ++v) {
            const double eps = spec.noise_std > 0.0 ? spec.noise_std * noise(rng) : 0.0;
            ts.values[t * spec.variates + v] = clean + eps;
        }
    }
    return ts;
}

}  // namespace mrf
