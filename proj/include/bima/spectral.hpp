#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "bima/tensor.hpp"

namespace bima::spectral {

enum class AmplitudeScale { two_over_n, none };

AmplitudeScale parse_amplitude_scale(std::string_view name);
std::string_view to_string(AmplitudeScale scale);

struct SpectralConfig {
  double resolution_hz = 0.25;
  double band_low_hz = 8.0;
  double band_high_hz = 64.0;
  AmplitudeScale amplitude_scale = AmplitudeScale::two_over_n;

  friend bool operator==(const SpectralConfig&, const SpectralConfig&) = default;
};

struct SpectralFeatures {
  nn::Tensor values;  // [C x 2F]: real parts of the retained bins, then imaginary parts
  std::vector<double> bin_frequencies_hz;
  SpectralConfig source_config;
};

// X[k] = sum_t x[t] exp(-i 2 pi k t / nfft) with x zero-padded to nfft.
std::vector<std::complex<double>> dft(std::span<const double> signal, std::size_t nfft);

// Throws ParameterError unless the configuration is usable for (fs, samples).
void validate(const SpectralConfig& cfg, double fs, std::size_t samples);

std::size_t nfft_for(const SpectralConfig& cfg, double fs);

// First and one-past-last DFT bin index inside [band_low_hz, band_high_hz].
std::pair<std::size_t, std::size_t> band_bins(const SpectralConfig& cfg, double fs);

std::size_t num_bins(const SpectralConfig& cfg, double fs);

// Complex-spectrum representation of a [C x T] trial.
SpectralFeatures complex_spectrum(const nn::Tensor& trial, double fs, const SpectralConfig& cfg);

}  // namespace bima::spectral
