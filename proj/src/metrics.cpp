#include "mrf/metrics.hpp"

#include <cmath>
#include <json.hpp>

#include "mrf/config.hpp"
#include "mrf/errors.hpp"

namespace mrf {

namespace {

void require_match(std::span<const double> a, std::span<const double> b, const char* name) {
    if (a.size() != b.size())
        throw ShapeError(std::string(name) + ": prediction has " + std::to_string(a.size()) + " values, target has " +
                         std::to_string(b.size()));
    if (a.empty()) throw ContractError(std::string(name) + ": empty input");
}

Matrix centered(const Matrix& m) {
    if (m.values.size() != m.rows * m.cols) throw ShapeError("linear_cka: matrix storage does not match dims");
    Matrix c = m;
    for (std::size_t j = 0; j < m.cols; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) mu += m.at(i, j);
        mu /= static_cast<double>(m.rows);
        for (std::size_t i = 0; i < m.rows; ++i) c.values[i * m.cols + j] -= mu;
    }
    return c;
}

// ||X^T Y||_F^2
double cross_frobenius_sq(const Matrix& x, const Matrix& y) {
    double total = 0.0;
    for (std::size_t p = 0; p < x.cols; ++p)
        for (std::size_t q = 0; q < y.cols; ++q) {
            double s = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) s += x.at(i, p) * y.at(i, q);
            total += s * s;
        }
    return total;
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> target) {
    require_match(pred, target, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> target) {
    require_match(pred, target, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

double smape(std::span<const double> pred, std::span<const double> target) {
    require_match(pred, target, "smape");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double denom = std::abs(target[i]) + std::abs(pred[i]);
        if (denom > 0.0) s += 200.0 * std::abs(target[i] - pred[i]) / denom;
    }
    return s / static_cast<double>(pred.size());
}

double mase(std::span<const double> pred, std::span<const double> target, std::span<const double> insample,
            std::size_t season) {
    require_match(pred, target, "mase");
    if (season < 1 || insample.size() <= season)
        throw ContractError("mase: in-sample length must exceed the season");
    double scale = 0.0;
    for (std::size_t t = season; t < insample.size(); ++t) scale += std::abs(insample[t] - insample[t - season]);
    scale /= static_cast<double>(insample.size() - season);
    if (scale == 0.0) throw UndefinedMetricError("mase: in-sample seasonal differences are all zero");
    return mae(pred, target) / scale;
}

double owa(double smape_value, double mase_value, double smape_naive2, double mase_naive2) {
    if (!(smape_naive2 > 0.0) || !(mase_naive2 > 0.0)) throw ContractError("owa: Naive2 references must be positive");
    return 0.5 * (smape_value / smape_naive2 + mase_value / mase_naive2);
}

std::vector<double> seasonal_naive(std::span<const double> history, std::size_t season, std::size_t horizon) {
    if (season < 1 || history.size() < season) throw ContractError("seasonal_naive: history shorter than season");
    std::vector<double> out(horizon);
    const std::size_t base = history.size() - season;
    for (std::size_t h = 0; h < horizon; ++h) out[h] = history[base + h % season];
    return out;
}

double linear_cka(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw ShapeError("linear_cka: representations cover different example counts");
    if (a.rows < 2) throw ContractError("linear_cka: need at least two examples");
    const Matrix ac = centered(a), bc = centered(b);
    const double xx = std::sqrt(cross_frobenius_sq(ac, ac));
    const double yy = std::sqrt(cross_frobenius_sq(bc, bc));
    if (xx == 0.0 || yy == 0.0) throw UndefinedMetricError("linear_cka: zero-variance representation");
    return cross_frobenius_sq(ac, bc) / (xx * yy);
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["mse"] = mse;
    j["mae"] = mae;
    if (smape) j["smape"] = *smape;
    if (mase) j["mase"] = *mase;
    if (owa) j["owa"] = *owa;
    if (!per_horizon.empty()) j["per_horizon_mse"] = per_horizon;
    return j.dump(2);
}

std::vector<double> per_horizon_mse(std::span<const double> pred, std::span<const double> target, std::size_t count,
                                    std::size_t horizon, std::size_t variates) {
    require_match(pred, target, "per_horizon_mse");
    if (pred.size() != count * horizon * variates) throw ShapeError("per_horizon_mse: size does not match [N, O, V]");
    std::vector<double> out(horizon, 0.0);
    for (std::size_t n = 0; n < count; ++n)
        for (std::size_t h = 0; h < horizon; ++h)
            for (std::size_t v = 0; v < variates; ++v) {
                const std::size_t i = (n * horizon + h) * variates + v;
                out[h] += (pred[i] - target[i]) * (pred[i] - target[i]);
            }
    for (auto& x : out) x /= static_cast<double>(count * variates);
    return out;
}

std::string per_horizon_csv(const std::vector<double>& per_horizon) {
    std::string out = "step,mse\n";
    for (std::size_t h = 0; h < per_horizon.size(); ++h)
        out += std::to_string(h + 1) + "," + format_double(per_horizon[h]) + "\n";
    return out;
}

}  // namespace mrf
