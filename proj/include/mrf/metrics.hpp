#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mrf {

double mse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);

/// M4 sMAPE in percent: mean of 200 |y - yhat| / (|y| + |yhat|); 0/0 terms count as 0.
double smape(std::span<const double> pred, std::span<const double> target);

/// MAE scaled by the in-sample seasonal-naive MAE with season `season`.
/// Throws UndefinedMetricError when that denominator is zero.
double mase(std::span<const double> pred, std::span<const double> target, std::span<const double> insample,
            std::size_t season);

/// 0.5 * (smape / smape_naive2 + mase / mase_naive2).
double owa(double smape_value, double mase_value, double smape_naive2, double mase_naive2);

/// Repeats the last observed season: forecast[h] = history[n - season + (h mod season)].
std::vector<double> seasonal_naive(std::span<const double> history, std::size_t season, std::size_t horizon);

/// Row-major n x cols matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Linear CKA between two representations of the same n examples. Columns
/// are centered internally. Throws UndefinedMetricError on a constant input.
double linear_cka(const Matrix& a, const Matrix& b);

struct MetricReport {
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> smape;
    std::optional<double> mase;
    std::optional<double> owa;
    std::vector<double> per_horizon;  // MSE per forecast step

    std::string to_json() const;
};

/// Per-step MSE for [N, O, V] predictions laid out row-major.
std::vector<double> per_horizon_mse(std::span<const double> pred, std::span<const double> target, std::size_t count,
                                    std::size_t horizon, std::size_t variates);
std::string per_horizon_csv(const std::vector<double>& per_horizon);

}  // namespace mrf
