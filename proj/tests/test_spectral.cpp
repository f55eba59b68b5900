#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "bima/error.hpp"
#include "bima/spectral.hpp"
#include "oracles.hpp"

using namespace bima;
using spectral::SpectralConfig;

TEST_CASE("dft equals the direct sum, including zero padding") {
  std::mt19937_64 rng(4);
  for (std::size_t n : {1u, 2u, 7u, 64u, 100u, 257u}) {
    for (std::size_t pad : {0u, 3u, 64u}) {
      const auto x = oracle::random_tensor({n}, rng);
      std::vector<double> xs(x.values().begin(), x.values().end());
      const auto fast = spectral::dft(x.values(), n + pad);
      const auto slow = oracle::direct_dft(xs, n + pad);
      double peak = 0.0, err = 0.0;
      for (std::size_t k = 0; k < n + pad; ++k) {
        peak = std::max(peak, std::abs(slow[k]));
        err = std::max(err, std::abs(slow[k] - fast[k]));
      }
      CHECK(err <= 1e-12 * std::max(1.0, peak));
    }
  }
}

TEST_CASE("dft of a unit impulse is flat") {
  std::vector<double> x(16, 0.0);
  x[0] = 1.0;
  for (const auto& c : spectral::dft(x, 16)) {
    CHECK(c.real() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::fabs(c.imag()) < 1e-15);
  }
}

TEST_CASE("dft rejects nfft shorter than the signal") {
  std::vector<double> x(8, 1.0);
  CHECK_THROWS_AS(spectral::dft(x, 4), ParameterError);
  CHECK_THROWS_AS(spectral::dft(x, 0), ParameterError);
}

TEST_CASE("band bins and feature count for the default configuration") {
  const SpectralConfig cfg;
  CHECK(spectral::nfft_for(cfg, 256.0) == 1024);
  const auto [first, last] = spectral::band_bins(cfg, 256.0);
  CHECK(first == 32);
  CHECK(last == 257);
  CHECK(spectral::num_bins(cfg, 256.0) == 225);
}

TEST_CASE("complex spectrum of tones: real part first, imaginary part second") {
  const double fs = 256.0;
  const std::size_t samples = 256;
  const SpectralConfig cfg;
  const std::size_t bins = spectral::num_bins(cfg, fs);
  nn::Tensor trial({2, samples});
  for (std::size_t t = 0; t < samples; ++t) {
    const double phase = 2.0 * std::numbers::pi * 10.0 * static_cast<double>(t) / fs;
    trial.at(0, t) = std::cos(phase);
    trial.at(1, t) = std::sin(phase);
  }
  const auto feat = spectral::complex_spectrum(trial, fs, cfg);
  REQUIRE(feat.values.shape() == nn::Shape{2, 2 * bins});
  REQUIRE(feat.bin_frequencies_hz.size() == bins);
  CHECK(feat.bin_frequencies_hz.front() == 8.0);
  CHECK(feat.bin_frequencies_hz.back() == 64.0);

  const std::size_t b10 = 8;  // 10 Hz sits 2 Hz above the 8 Hz band edge at 0.25 Hz spacing
  CHECK(feat.bin_frequencies_hz[b10] == 10.0);
  // N/2 * 2/nfft with N = 256 samples, nfft = 1024
  CHECK(feat.values.at(0, b10) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(std::fabs(feat.values.at(0, bins + b10)) < 1e-12);
  CHECK(std::fabs(feat.values.at(1, b10)) < 1e-12);
  CHECK(feat.values.at(1, bins + b10) == doctest::Approx(-0.25).epsilon(1e-12));

  // Every entry against the direct transform.
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> row(trial.data() + c * samples, trial.data() + (c + 1) * samples);
    const auto slow = oracle::direct_dft(row, 1024);
    for (std::size_t b = 0; b < bins; ++b) {
      CHECK(std::fabs(feat.values.at(c, b) - slow[32 + b].real() * 2.0 / 1024.0) < 1e-12);
      CHECK(std::fabs(feat.values.at(c, bins + b) - slow[32 + b].imag() * 2.0 / 1024.0) < 1e-12);
    }
  }
}

TEST_CASE("amplitude scale none keeps raw coefficients") {
  nn::Tensor trial({1, 64});
  for (std::size_t t = 0; t < 64; ++t) trial[t] = std::cos(2.0 * std::numbers::pi * 16.0 * t / 128.0);
  SpectralConfig cfg{1.0, 8.0, 32.0, spectral::AmplitudeScale::none};
  const auto feat = spectral::complex_spectrum(trial, 128.0, cfg);
  CHECK(feat.values.at(0, 8) == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(spectral::parse_amplitude_scale("none") == spectral::AmplitudeScale::none);
  CHECK(spectral::to_string(spectral::AmplitudeScale::two_over_n) == "two_over_n");
  CHECK_THROWS_AS(spectral::parse_amplitude_scale("db"), ParameterError);
}

TEST_CASE("invalid spectral configurations are rejected") {
  const nn::Tensor trial({2, 256});
  CHECK_THROWS_AS(spectral::complex_spectrum(trial, 256.0, {0.25, 8.0, 200.0}), ParameterError);
  CHECK_THROWS_AS(spectral::complex_spectrum(trial, 256.0, {0.25, 20.0, 10.0}), ParameterError);
  CHECK_THROWS_AS(spectral::complex_spectrum(trial, 256.0, {2.0, 8.0, 64.0}), ParameterError);
  CHECK_THROWS_AS(spectral::complex_spectrum(trial, 256.0, {0.0, 8.0, 64.0}), ParameterError);
  CHECK_THROWS_AS(spectral::complex_spectrum(nn::Tensor({256}), 256.0, {}), ShapeError);
}
