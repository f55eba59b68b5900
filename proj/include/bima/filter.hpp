#pragma once

#include <span>
#include <vector>

namespace bima::data {

// Second-order section, a0 normalized to 1, transposed direct form II.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

using SosFilter = std::vector<Biquad>;

// Digital Butterworth designs via the bilinear transform with pre-warping.
// `order` is the order of the analog low-pass prototype, so a band-pass of
// order 4 has 4 second-order sections.
SosFilter butterworth_lowpass(int order, double cutoff_hz, double fs);
SosFilter butterworth_bandpass(int order, double low_hz, double high_hz, double fs);

// Single forward pass from rest.
std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x);

// Zero-phase forward-backward filtering with odd-extension padding and
// steady-state initial conditions at both ends.
std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x);

}  // namespace bima::data
