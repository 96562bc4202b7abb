#include "mrf/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "mrf/errors.hpp"

namespace mrf {

namespace {

using cd = std::complex<double>;

// Guards plan creation.
std::mutex g_plan_mutex;

fftw_plan c2c_plan(std::size_t n) {
    static std::map<std::size_t, fftw_plan> cache;
    std::lock_guard lock(g_plan_mutex);
    auto& plan = cache[n];
    if (!plan) {
        std::vector<cd> scratch(n);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    return plan;
}

fftw_plan r2c_plan(std::size_t n) {
    static std::map<std::size_t, fftw_plan> cache;
    std::lock_guard lock(g_plan_mutex);
    auto& plan = cache[n];
    if (!plan) {
        std::vector<double> in(n);
        std::vector<cd> out(n / 2 + 1);
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    return plan;
}

}  // namespace

std::vector<cd> fft(std::span<const cd> input) {
    if (input.empty()) return {};
    std::vector<cd> out(input.begin(), input.end());
    auto* buf = reinterpret_cast<fftw_complex*>(out.data());
    fftw_execute_dft(c2c_plan(out.size()), buf, buf);
    return out;
}

AmplitudeSpectrum amplitude_spectrum(std::span<const double> values, std::size_t batch, std::size_t length,
                                     std::size_t variates) {
    if (length < 2) throw ContractError("amplitude_spectrum: window length must be >= 2");
    if (values.size() != batch * length * variates)
        throw ShapeError("amplitude_spectrum: value count does not match (B, I, V)");
    const std::size_t nf = length / 2;
    AmplitudeSpectrum spec;
    spec.window_length = length;
    spec.amps.assign(nf, 0.0);
    const fftw_plan plan = r2c_plan(length);
    std::vector<double> series(length);
    std::vector<cd> X(nf + 1);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t v = 0; v < variates; ++v) {
            for (std::size_t t = 0; t < length; ++t) {
                const double val = values[(b * length + t) * variates + v];
                if (!std::isfinite(val)) throw NumericError("amplitude_spectrum: non-finite input");
                series[t] = val;
            }
            fftw_execute_dft_r2c(plan, series.data(), reinterpret_cast<fftw_complex*>(X.data()));
            for (std::size_t f = 1; f <= nf; ++f) spec.amps[f - 1] += std::abs(X[f]);
        }
    const double norm = 1.0 / static_cast<double>(batch * variates);
    for (auto& a : spec.amps) a *= norm;
    return spec;
}

AmplitudeSpectrum amplitude_spectrum(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("amplitude_spectrum: expected [B, I, V], got " + shape_str(x.shape()));
    return amplitude_spectrum(x.data(), x.dim(0), x.dim(1), x.dim(2));
}

std::vector<double> amplitude_weights(std::span<const double> amplitudes) {
    if (amplitudes.empty()) return {};
    const double mx = *std::max_element(amplitudes.begin(), amplitudes.end());
    std::vector<double> w(amplitudes.size());
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) z += (w[i] = std::exp(amplitudes[i] - mx));
    for (auto& v : w) v /= z;
    return w;
}

PeriodicitySet detect_salient_periods(const AmplitudeSpectrum& spectrum, std::size_t k) {
    if (k < 1) throw ContractError("detect_salient_periods: k must be >= 1");
    const std::size_t I = spectrum.window_length;
    const std::size_t nf = spectrum.amps.size();
    std::vector<std::size_t> order(nf);
    std::iota(order.begin(), order.end(), std::size_t{1});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return spectrum.at(a) > spectrum.at(b); });

    PeriodicitySet set;
    for (std::size_t f : order) {
        if (set.size() == k) break;
        const std::size_t period = (I + f - 1) / f;
        if (std::find(set.periods.begin(), set.periods.end(), period) != set.periods.end()) continue;
        set.frequencies.push_back(f);
        set.periods.push_back(period);
        set.amplitudes.push_back(spectrum.at(f));
    }
    set.weights = amplitude_weights(set.amplitudes);
    return set;
}

PeriodicitySet single_period(std::size_t period) {
    PeriodicitySet set;
    set.frequencies = {1};
    set.periods = {period};
    set.amplitudes = {0.0};
    set.weights = {1.0};
    return set;
}

}  // namespace mrf
