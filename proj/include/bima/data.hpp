#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace bima::data {

// Labeled multi-channel trials of one subject. Immutable after construction;
// the constructor enforces every invariant.
class EegEpochSet {
 public:
  EegEpochSet(std::string subject_id, double sampling_rate_hz, std::vector<std::string> channel_names,
              std::vector<double> stimulus_frequencies_hz, std::size_t num_trials, std::size_t num_samples,
              std::vector<double> samples, std::vector<int> labels);

  const std::string& subject_id() const { return subject_id_; }
  double sampling_rate_hz() const { return sampling_rate_hz_; }
  const std::vector<std::string>& channel_names() const { return channel_names_; }
  const std::vector<double>& stimulus_frequencies_hz() const { return stimulus_frequencies_hz_; }
  std::size_t num_trials() const { return num_trials_; }
  std::size_t num_channels() const { return channel_names_.size(); }
  std::size_t num_samples() const { return num_samples_; }
  std::size_t num_classes() const { return stimulus_frequencies_hz_.size(); }
  double duration_s() const { return static_cast<double>(num_samples_) / sampling_rate_hz_; }

  // Trial-major, then channel-major, then sample order.
  const std::vector<double>& samples() const { return samples_; }
  const std::vector<int>& labels() const { return labels_; }

  std::span<const double> trial(std::size_t i) const;  // C x T block
  std::span<const double> channel(std::size_t trial, std::size_t channel) const;

  friend bool operator==(const EegEpochSet&, const EegEpochSet&) = default;

 private:
  std::string subject_id_;
  double sampling_rate_hz_;
  std::vector<std::string> channel_names_;
  std::vector<double> stimulus_frequencies_hz_;
  std::size_t num_trials_;
  std::size_t num_samples_;
  std::vector<double> samples_;
  std::vector<int> labels_;
};

// --- canonical container -------------------------------------------------

EegEpochSet load_epochs(const std::filesystem::path& path);
void save_epochs(const EegEpochSet& set, const std::filesystem::path& path);

// All *.eegb files in a directory, sorted by file name.
std::vector<EegEpochSet> load_epoch_dir(const std::filesystem::path& dir);

// --- preprocessing ---------------------------------------------------------

// Zero-phase 4th-order Butterworth band-pass per channel.
EegEpochSet bandpass(const EegEpochSet& set, double low_hz, double high_hz);

// Zero-phase anti-alias low-pass at 0.8 x the new Nyquist, then every
// factor-th sample.
EegEpochSet decimate(const EegEpochSet& set, int factor);

EegEpochSet select_channels(const EegEpochSet& set, const std::vector<std::string>& names);

EegEpochSet crop_window(const EegEpochSet& set, double start_s, double length_s);

// --- synthetic phase-locked SSVEP ----------------------------------------

struct SynthConfig {
  int num_subjects = 1;
  std::vector<double> classes_hz;
  int trials_per_class = 1;
  double sampling_rate_hz = 256.0;
  double window_s = 1.0;
  int num_channels = 8;
  int num_harmonics = 3;
  double snr_db = std::numeric_limits<double>::infinity();
  double subject_phase_jitter_rad = 0.1;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

// One epoch set per subject, subject ids "subject_1", "subject_2", ...
std::vector<EegEpochSet> synthesize(const SynthConfig& cfg);

// The 12-target grid 9.25 .. 14.75 Hz in 0.5 Hz steps.
std::vector<double> twelve_target_grid();

}  // namespace bima::data
