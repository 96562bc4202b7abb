#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mrf {

/// T x V row-major values with optional labels.
struct TimeSeries {
    std::size_t length = 0;    // T
    std::size_t variates = 0;  // V
    std::vector<double> values;
    std::vector<std::string> variate_names;
    std::vector<std::string> timestamps;      // empty or length T
    std::vector<double> ground_truth_periods;  // filled by the synthetic generator

    double at(std::size_t t, std::size_t v) const { return values[t * variates + v]; }
    /// Rows [begin, begin + count).
    TimeSeries rows(std::size_t begin, std::size_t count) const;
};

struct CsvOptions {
    bool has_header = true;
    bool timestamp_col = false;
    char delimiter = ',';
};

/// Throws DataError naming row/column for unparseable or non-finite cells.
TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
TimeSeries parse_csv(const std::string& text, const CsvOptions& options = {});
/// Writes header (if names are present), optional timestamp column, values in
/// shortest round-trip form.
std::string format_csv(const TimeSeries& ts, char delimiter = ',');
void save_csv(const std::filesystem::path& path, const TimeSeries& ts, char delimiter = ',');

/// Chronological split fractions; explicit boundaries override when non-zero.
struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;
    std::size_t train_end = 0;
    std::size_t val_end = 0;

    void validate() const;
};

/// Per-variate z-score fitted on one slice.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;

    static Standardizer fit(const TimeSeries& ts);
    TimeSeries apply(const TimeSeries& ts) const;
    TimeSeries invert(const TimeSeries& ts) const;
};

struct DataSplits {
    TimeSeries train, val, test;  // standardized with train statistics
    Standardizer scaler;
    std::size_t train_end = 0;  // rows [0, train_end) are train
    std::size_t val_end = 0;    // rows [train_end, val_end) are val
};

DataSplits chrono_split(const TimeSeries& ts, const SplitSpec& spec);

struct SineComponent {
    double period = 24.0;
    double amplitude = 1.0;
    double phase = 0.0;
};

struct SynthSpec {
    std::size_t length = 2000;
    std::size_t variates = 1;
    std::vector<SineComponent> components{{24.0, 1.0, 0.0}, {56.0, 0.5, 0.0}};
    double trend_slope = 0.0;
    double noise_std = 0.1;
    std::uint64_t seed = 0;
};

/// Sum of sinusoids + linear trend + seeded Gaussian noise.
TimeSeries synth_multiperiodic(const SynthSpec& spec);

}  // namespace mrf
