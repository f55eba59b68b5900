#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "bima/data.hpp"
#include "bima/error.hpp"

namespace bima::data {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const char* const kOccipital[] = {"PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2"};

std::vector<std::string> channel_names_for(int count) {
  std::vector<std::string> names;
  for (int c = 0; c < count; ++c) {
    names.push_back(count <= 8 ? std::string(kOccipital[c]) : "ch" + std::to_string(c + 1));
  }
  return names;
}

// Square matrix with Gaussian entries, redrawn until Gaussian elimination with
// partial pivoting finds no pivot below 1e-3 (comfortably full rank).
std::vector<double> mixing_matrix(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = static_cast<std::size_t>(n);
  for (;;) {
    std::vector<double> m(dim * dim);
    for (double& v : m) v = normal(rng);
    std::vector<double> work = m;
    bool ok = true;
    for (std::size_t col = 0; col < dim && ok; ++col) {
      std::size_t pivot = col;
      for (std::size_t r = col + 1; r < dim; ++r) {
        if (std::abs(work[r * dim + col]) > std::abs(work[pivot * dim + col])) pivot = r;
      }
      if (std::abs(work[pivot * dim + col]) < 1e-3) {
        ok = false;
        break;
      }
      for (std::size_t c = 0; c < dim; ++c) std::swap(work[col * dim + c], work[pivot * dim + c]);
      for (std::size_t r = col + 1; r < dim; ++r) {
        const double f = work[r * dim + col] / work[col * dim + col];
        for (std::size_t c = col; c < dim; ++c) work[r * dim + c] -= f * work[col * dim + c];
      }
    }
    if (ok) return m;
  }
}

}  // namespace

std::vector<double> twelve_target_grid() {
  std::vector<double> f;
  for (int k = 0; k < 12; ++k) f.push_back(9.25 + 0.5 * k);
  return f;
}

void validate(const SynthConfig& cfg) {
  if (cfg.num_subjects < 1) throw ParameterError("synth: num_subjects must be >= 1");
  if (cfg.classes_hz.size() < 2) throw ParameterError("synth: at least 2 class frequencies are required");
  if (cfg.trials_per_class < 1) throw ParameterError("synth: trials_per_class must be >= 1");
  if (!(cfg.sampling_rate_hz > 0.0)) throw ParameterError("synth: sampling rate must be positive");
  if (!(cfg.window_s > 0.0)) throw ParameterError("synth: window must be positive");
  if (cfg.num_channels < 1) throw ParameterError("synth: num_channels must be >= 1");
  if (cfg.num_harmonics < 1) throw ParameterError("synth: num_harmonics must be >= 1");
  if (!(cfg.subject_phase_jitter_rad >= 0.0)) throw ParameterError("synth: phase jitter must be nonnegative");
  if (std::isnan(cfg.snr_db) || cfg.snr_db == -std::numeric_limits<double>::infinity()) {
    throw ParameterError("synth: snr_db must be a real number or +infinity");
  }
  const double nyquist = cfg.sampling_rate_hz / 2.0;
  for (double f : cfg.classes_hz) {
    if (!(f > 0.0) || f >= nyquist) {
      throw ParameterError("synth: stimulus frequency " + std::to_string(f) + " Hz outside (0, Nyquist)");
    }
  }
  const double samples = std::round(cfg.window_s * cfg.sampling_rate_hz);
  if (samples < 2.0) throw ParameterError("synth: window holds fewer than 2 samples");
}

std::vector<EegEpochSet> synthesize(const SynthConfig& cfg) {
  validate(cfg);
  const auto channels = static_cast<std::size_t>(cfg.num_channels);
  const auto harmonics = static_cast<std::size_t>(cfg.num_harmonics);
  const std::size_t classes = cfg.classes_hz.size();
  const auto samples = static_cast<std::size_t>(std::round(cfg.window_s * cfg.sampling_rate_hz));
  const double fs = cfg.sampling_rate_hz;

  // Dataset-wide structure: mixing matrix and per-source harmonic lags.
  std::seed_seq global_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0u};
  std::mt19937_64 global_rng(global_seed);
  const std::vector<double> mixing = mixing_matrix(cfg.num_channels, global_rng);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::vector<double> source_lag(channels * harmonics);
  for (double& lag : source_lag) lag = phase(global_rng);

  const double noise_ratio = std::isinf(cfg.snr_db) ? 0.0 : std::pow(10.0, -cfg.snr_db / 10.0);

  std::vector<EegEpochSet> subjects;
  for (int s = 0; s < cfg.num_subjects; ++s) {
    std::seed_seq subject_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                               static_cast<std::uint32_t>(s + 1)};
    std::mt19937_64 rng(subject_seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    // Per-subject phase jitter for every (class, source).
    std::vector<double> jitter(classes * channels);
    for (double& j : jitter) j = cfg.subject_phase_jitter_rad * normal(rng);

    // Noiseless templates [class][channel][sample].
    std::vector<double> templates(classes * channels * samples, 0.0);
    std::vector<double> source(channels * samples);
    for (std::size_t k = 0; k < classes; ++k) {
      const double f = cfg.classes_hz[k];
      const double class_phase = std::fmod(0.5 * std::numbers::pi * static_cast<double>(k), kTwoPi);
      std::fill(source.begin(), source.end(), 0.0);
      for (std::size_t src = 0; src < channels; ++src) {
        for (std::size_t h = 1; h <= harmonics; ++h) {
          const double fh = f * static_cast<double>(h);
          if (fh >= fs / 2.0) continue;
          const double amp = 1.0 / static_cast<double>(h);
          const double ph = class_phase + source_lag[src * harmonics + h - 1] + jitter[k * channels + src];
          for (std::size_t n = 0; n < samples; ++n) {
            const double t = static_cast<double>(n) / fs;
            source[src * samples + n] += amp * std::sin(kTwoPi * fh * t + ph);
          }
        }
      }
      for (std::size_t c = 0; c < channels; ++c) {
        double* out = templates.data() + (k * channels + c) * samples;
        for (std::size_t src = 0; src < channels; ++src) {
          const double w = mixing[c * channels + src];
          for (std::size_t n = 0; n < samples; ++n) out[n] += w * source[src * samples + n];
        }
      }
    }

    std::vector<double> trials;
    std::vector<int> labels;
    trials.reserve(classes * static_cast<std::size_t>(cfg.trials_per_class) * channels * samples);
    for (int block = 0; block < cfg.trials_per_class; ++block) {
      for (std::size_t k = 0; k < classes; ++k) {
        labels.push_back(static_cast<int>(k));
        for (std::size_t c = 0; c < channels; ++c) {
          const double* tmpl = templates.data() + (k * channels + c) * samples;
          double power = 0.0;
          for (std::size_t n = 0; n < samples; ++n) power += tmpl[n] * tmpl[n];
          power /= static_cast<double>(samples);
          const double sigma = std::sqrt(power * noise_ratio);
          for (std::size_t n = 0; n < samples; ++n) {
            trials.push_back(sigma > 0.0 ? tmpl[n] + sigma * normal(rng) : tmpl[n]);
          }
        }
      }
    }
    subjects.emplace_back("subject_" + std::to_string(s + 1), fs, channel_names_for(cfg.num_channels),
                          cfg.classes_hz, labels.size(), samples, std::move(trials), std::move(labels));
  }
  return subjects;
}

}  // namespace bima::data
