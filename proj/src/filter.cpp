#include "bima/filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "bima/error.hpp"

namespace bima::data {
namespace {

using cplx = std::complex<double>;

// Left-half-plane poles of the unit-cutoff analog Butterworth prototype.
std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs); }

// Denominator of a section holding a conjugate pair (or two real poles).
Biquad section_from_poles(cplx z1, cplx z2) {
  Biquad s;
  s.a1 = -(z1 + z2).real();
  s.a2 = (z1 * z2).real();
  return s;
}

cplx section_response(const Biquad& s, cplx zinv) {
  return (s.b0 + s.b1 * zinv + s.b2 * zinv * zinv) / (1.0 + s.a1 * zinv + s.a2 * zinv * zinv);
}

void check_order(int order) {
  if (order < 1) throw ParameterError("Butterworth order must be at least 1, got " + std::to_string(order));
}

// Steady-state DF2T state of each section for a unit step input into the cascade.
std::vector<std::array<double, 2>> step_initial_state(const SosFilter& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double scale = 1.0;
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const Biquad& s = sos[i];
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * gain;
    const double z1 = s.b1 - s.a1 * gain + z2;
    zi[i] = {scale * z1, scale * z2};
    scale *= gain;
  }
  return zi;
}

void run_cascade(const SosFilter& sos, std::vector<double>& x, std::vector<std::array<double, 2>> state) {
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const Biquad& s = sos[i];
    double z1 = state[i][0], z2 = state[i][1];
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

SosFilter butterworth_lowpass(int order, double cutoff_hz, double fs) {
  check_order(order);
  if (!(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0)) {
    throw ParameterError("low-pass cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, Nyquist)");
  }
  const double wc = prewarp(cutoff_hz, fs);
  SosFilter sos;
  for (const cplx& p : prototype_poles(order)) {
    if (p.imag() < -1e-12) continue;
    const cplx z = bilinear(p * wc, fs);
    Biquad s;
    if (std::abs(p.imag()) <= 1e-12) {
      // first-order section: zero at -1, real pole
      s.a1 = -z.real();
      const double g = (1.0 + s.a1) / 2.0;
      s.b0 = g;
      s.b1 = g;
    } else {
      s = section_from_poles(z, std::conj(z));
      const double g = (1.0 + s.a1 + s.a2) / 4.0;
      s.b0 = g;
      s.b1 = 2.0 * g;
      s.b2 = g;
    }
    sos.push_back(s);
  }
  return sos;
}

SosFilter butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
  check_order(order);
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0)) {
    throw ParameterError("band " + std::to_string(low_hz) + "-" + std::to_string(high_hz) +
                         " Hz must satisfy 0 < low < high < Nyquist (" + std::to_string(fs / 2.0) + " Hz)");
  }
  const double wl = prewarp(low_hz, fs);
  const double wh = prewarp(high_hz, fs);
  const double bw = wh - wl;
  const double w0 = std::sqrt(wl * wh);
  SosFilter sos;
  for (const cplx& p : prototype_poles(order)) {
    if (p.imag() < -1e-12) continue;
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0 * w0);
    const cplx s1 = half + root;
    const cplx s2 = half - root;
    if (std::abs(p.imag()) <= 1e-12) {
      sos.push_back(section_from_poles(bilinear(s1, fs), bilinear(s2, fs)));
    } else {
      const cplx z1 = bilinear(s1, fs);
      const cplx z2 = bilinear(s2, fs);
      sos.push_back(section_from_poles(z1, std::conj(z1)));
      sos.push_back(section_from_poles(z2, std::conj(z2)));
    }
  }
  for (Biquad& s : sos) {
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
  }
  // unit gain at the digital image of the analog centre frequency
  const double omega0 = 2.0 * std::atan(w0 / (2.0 * fs));
  const cplx zinv = std::polar(1.0, -omega0);
  double mag = 1.0;
  for (const Biquad& s : sos) mag *= std::abs(section_response(s, zinv));
  const double per_section = std::pow(mag, -1.0 / static_cast<double>(sos.size()));
  for (Biquad& s : sos) {
    s.b0 *= per_section;
    s.b2 *= per_section;
  }
  return sos;
}

std::vector<double> sos_filter(const SosFilter& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_cascade(sos, y, std::vector<std::array<double, 2>>(sos.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> sos_filtfilt(const SosFilter& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw ParameterError("filtfilt needs at least 2 samples");
  std::size_t taps = 2 * sos.size() + 1;
  const auto zero_b2 = std::count_if(sos.begin(), sos.end(), [](const Biquad& s) { return s.b2 == 0.0; });
  const auto zero_a2 = std::count_if(sos.begin(), sos.end(), [](const Biquad& s) { return s.a2 == 0.0; });
  taps -= static_cast<std::size_t>(std::min(zero_b2, zero_a2));
  const std::size_t pad = std::min(3 * taps, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_initial_state(sos);
  auto scaled = [&zi](double by) {
    auto out = zi;
    for (auto& z : out) {
      z[0] *= by;
      z[1] *= by;
    }
    return out;
  };
  run_cascade(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_cascade(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace bima::data
