#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "mrf/tensor.hpp"

namespace mrf {

/// Mean DFT magnitude per frequency f = 1 .. floor(I/2). DC is excluded, so
/// amps[f - 1] is the amplitude of frequency f.
struct AmplitudeSpectrum {
    std::vector<double> amps;
    std::size_t window_length = 0;

    double at(std::size_t frequency) const { return amps.at(frequency - 1); }
};

/// Salient periodicities of one block input, ranked by amplitude.
struct PeriodicitySet {
    std::vector<std::size_t> frequencies;
    std::vector<std::size_t> periods;  // ceil(I / f)
    std::vector<double> amplitudes;    // non-increasing
    std::vector<double> weights;       // softmax(amplitudes)

    std::size_t size() const { return periods.size(); }
    bool empty() const { return periods.empty(); }
};

/// Forward DFT of arbitrary length (FFTW).
std::vector<std::complex<double>> fft(std::span<const std::complex<double>> input);

/// Averages |DFT| over examples and variates of a [B, I, V] block (row-major).
/// No gradient flows through this.
AmplitudeSpectrum amplitude_spectrum(std::span<const double> values, std::size_t batch, std::size_t length,
                                     std::size_t variates);
AmplitudeSpectrum amplitude_spectrum(const Tensor& x);

/// Picks the k largest amplitudes (ties toward lower frequency), maps each to
/// ceil(I / f) and skips frequencies whose period was already taken. May
/// return fewer than k entries when the spectrum runs out.
PeriodicitySet detect_salient_periods(const AmplitudeSpectrum& spectrum, std::size_t k);

/// Softmax of raw amplitudes.
std::vector<double> amplitude_weights(std::span<const double> amplitudes);

/// Single-period set with weight 1, used when detection yields nothing.
PeriodicitySet single_period(std::size_t period);

}  // namespace mrf
