#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "mrf/tensor.hpp"

namespace mrf::test {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, bool requires_grad = false, double lo = -1.0,
                            double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(shape, std::move(v), requires_grad);
}

inline double rel_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between the analytic gradient of `loss` (a scalar
/// built from `inputs`) and central differences with step h.
inline double max_fd_error(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-5,
                           double floor = 1e-8) {
    for (auto& t : inputs) t.zero_grad();
    loss().backward();
    double worst = 0.0;
    for (auto& t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto data = t.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = loss().item();
            data[i] = keep - h;
            const double down = loss().item();
            data[i] = keep;
            worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h), floor));
        }
    }
    return worst;
}

/// O(n^2) DFT magnitudes |X_f| for f = 0 .. n-1.
inline std::vector<double> naive_dft_magnitudes(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    for (std::size_t f = 0; f < n; ++f) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double angle = -2.0 * std::numbers::pi * static_cast<double>((f * t) % n) / static_cast<double>(n);
            acc += x[t] * std::polar(1.0, angle);
        }
        out[f] = std::abs(acc);
    }
    return out;
}

inline std::vector<double> tone(std::size_t n, double frequency, double amplitude, double phase = 0.0) {
    std::vector<double> v(n);
    for (std::size_t t = 0; t < n; ++t)
        v[t] = amplitude * std::sin(2.0 * std::numbers::pi * frequency * static_cast<double>(t) /
                                        static_cast<double>(n) +
                                    phase);
    return v;
}

}  // namespace mrf::test
