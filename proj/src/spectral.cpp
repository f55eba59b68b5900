#include "bima/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include "bima/error.hpp"

namespace bima::spectral {
namespace {

// FFTW's planner is not thread-safe; execution with the new-array interface
// is. Plans are created once per length (unaligned, so any buffer works).
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n) {
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(n); it != plans_.end()) return it->second;
    std::vector<double> in(n);
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(),
                                          FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
    if (plan == nullptr) throw ParameterError("FFTW could not plan a transform of length " + std::to_string(n));
    plans_.emplace(n, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::size_t, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

}  // namespace

AmplitudeScale parse_amplitude_scale(std::string_view name) {
  if (name == "two_over_n") return AmplitudeScale::two_over_n;
  if (name == "none") return AmplitudeScale::none;
  throw ParameterError("unknown amplitude_scale '" + std::string(name) + "' (expected two_over_n or none)");
}

std::string_view to_string(AmplitudeScale scale) {
  return scale == AmplitudeScale::two_over_n ? "two_over_n" : "none";
}

std::vector<std::complex<double>> dft(std::span<const double> signal, std::size_t nfft) {
  if (nfft == 0 || nfft < signal.size()) {
    throw ParameterError("dft: nfft " + std::to_string(nfft) + " shorter than signal length " +
                         std::to_string(signal.size()));
  }
  std::vector<double> in(nfft, 0.0);
  std::copy(signal.begin(), signal.end(), in.begin());
  std::vector<fftw_complex> half(nfft / 2 + 1);
  fftw_execute_dft_r2c(plan_cache().get(nfft), in.data(), half.data());

  std::vector<std::complex<double>> out(nfft);
  for (std::size_t k = 0; k < half.size(); ++k) out[k] = {half[k][0], half[k][1]};
  for (std::size_t k = half.size(); k < nfft; ++k) out[k] = std::conj(out[nfft - k]);
  return out;
}

std::size_t nfft_for(const SpectralConfig& cfg, double fs) {
  if (!(cfg.resolution_hz > 0.0)) throw ParameterError("spectral: resolution_hz must be positive");
  return static_cast<std::size_t>(std::llround(fs / cfg.resolution_hz));
}

void validate(const SpectralConfig& cfg, double fs, std::size_t samples) {
  if (!(fs > 0.0)) throw ParameterError("spectral: sampling rate must be positive");
  if (!(cfg.band_low_hz > 0.0 && cfg.band_low_hz < cfg.band_high_hz && cfg.band_high_hz < fs / 2.0)) {
    throw ParameterError("spectral: band " + std::to_string(cfg.band_low_hz) + "-" + std::to_string(cfg.band_high_hz) +
                         " Hz must satisfy 0 < low < high < Nyquist (" + std::to_string(fs / 2.0) + " Hz)");
  }
  const std::size_t nfft = nfft_for(cfg, fs);
  if (nfft < samples) {
    throw ParameterError("spectral: nfft " + std::to_string(nfft) + " (fs / resolution) is shorter than " +
                         std::to_string(samples) + " samples");
  }
  if (num_bins(cfg, fs) == 0) throw ParameterError("spectral: band contains no DFT bins");
}

std::pair<std::size_t, std::size_t> band_bins(const SpectralConfig& cfg, double fs) {
  const auto nfft = static_cast<double>(nfft_for(cfg, fs));
  // tolerance absorbs rounding when a band edge sits exactly on a bin
  const double lo = std::ceil(cfg.band_low_hz * nfft / fs - 1e-9);
  const double hi = std::floor(cfg.band_high_hz * nfft / fs + 1e-9);
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi) + 1};
}

std::size_t num_bins(const SpectralConfig& cfg, double fs) {
  const auto [first, last] = band_bins(cfg, fs);
  return last - first;
}

SpectralFeatures complex_spectrum(const nn::Tensor& trial, double fs, const SpectralConfig& cfg) {
  if (trial.rank() != 2) throw ShapeError("complex_spectrum: expected [C x T], got " + nn::shape_to_string(trial.shape()));
  const std::size_t channels = trial.dim(0), samples = trial.dim(1);
  validate(cfg, fs, samples);
  const std::size_t nfft = nfft_for(cfg, fs);
  const auto [first, last] = band_bins(cfg, fs);
  const std::size_t bins = last - first;
  const double scale = cfg.amplitude_scale == AmplitudeScale::two_over_n ? 2.0 / static_cast<double>(nfft) : 1.0;

  SpectralFeatures features;
  features.source_config = cfg;
  features.values = nn::Tensor({channels, 2 * bins});
  for (std::size_t k = first; k < last; ++k) {
    features.bin_frequencies_hz.push_back(static_cast<double>(k) * fs / static_cast<double>(nfft));
  }
  for (std::size_t c = 0; c < channels; ++c) {
    const auto spectrum = dft(std::span<const double>(trial.data() + c * samples, samples), nfft);
    double* row = features.values.data() + c * 2 * bins;
    for (std::size_t b = 0; b < bins; ++b) {
      row[b] = spectrum[first + b].real() * scale;
      row[bins + b] = spectrum[first + b].imag() * scale;
    }
  }
  return features;
}

}  // namespace bima::spectral
