#include "bima/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include "json.hpp"

#include "bima/error.hpp"
#include "bima/filter.hpp"

namespace bima::data {

using ordered_json = nlohmann::ordered_json;

EegEpochSet::EegEpochSet(std::string subject_id, double sampling_rate_hz, std::vector<std::string> channel_names,
                         std::vector<double> stimulus_frequencies_hz, std::size_t num_trials,
                         std::size_t num_samples, std::vector<double> samples, std::vector<int> labels)
    : subject_id_(std::move(subject_id)),
      sampling_rate_hz_(sampling_rate_hz),
      channel_names_(std::move(channel_names)),
      stimulus_frequencies_hz_(std::move(stimulus_frequencies_hz)),
      num_trials_(num_trials),
      num_samples_(num_samples),
      samples_(std::move(samples)),
      labels_(std::move(labels)) {
  if (!(sampling_rate_hz_ > 0.0) || !std::isfinite(sampling_rate_hz_)) {
    throw ValidationError("sampling rate must be positive, got " + std::to_string(sampling_rate_hz_));
  }
  if (num_trials_ == 0) throw ValidationError("epoch set must contain at least one trial");
  if (channel_names_.empty()) throw ValidationError("epoch set must contain at least one channel");
  if (num_samples_ < 2) throw ValidationError("trials need at least 2 samples");
  if (stimulus_frequencies_hz_.size() < 2) throw ValidationError("at least 2 stimulus classes are required");
  for (double f : stimulus_frequencies_hz_) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ValidationError("stimulus frequencies must be positive");
  }
  if (labels_.size() != num_trials_) {
    throw SizeError(std::to_string(labels_.size()) + " labels for " + std::to_string(num_trials_) + " trials");
  }
  if (samples_.size() != num_trials_ * channel_names_.size() * num_samples_) {
    throw SizeError("sample buffer holds " + std::to_string(samples_.size()) + " values, expected " +
                    std::to_string(num_trials_ * channel_names_.size() * num_samples_));
  }
  for (int label : labels_) {
    if (label < 0 || static_cast<std::size_t>(label) >= stimulus_frequencies_hz_.size()) {
      throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(stimulus_frequencies_hz_.size()) + ")");
    }
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!std::isfinite(samples_[i])) {
      throw ValidationError("non-finite sample at flat index " + std::to_string(i));
    }
  }
}

std::span<const double> EegEpochSet::trial(std::size_t i) const {
  const std::size_t block = num_channels() * num_samples_;
  return std::span<const double>(samples_).subspan(i * block, block);
}

std::span<const double> EegEpochSet::channel(std::size_t trial_index, std::size_t channel_index) const {
  return trial(trial_index).subspan(channel_index * num_samples_, num_samples_);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T header_field(const ordered_json& header, const char* name) {
  const auto it = header.find(name);
  if (it == header.end()) throw FormatError(std::string("EEGB header: missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("EEGB header: field '") + name + "' has the wrong type");
  }
}

void put_f32_le(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

EegEpochSet load_epochs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw FormatError("EEGB: missing header line in '" + path.string() + "'");

  ordered_json header;
  try {
    header = ordered_json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("EEGB header is not valid JSON: " + std::string(e.what()));
  }
  if (!header.is_object()) throw FormatError("EEGB header must be a JSON object");
  if (header_field<std::string>(header, "format") != "EEGB") throw FormatError("EEGB header: field 'format' must be \"EEGB\"");
  if (header_field<int>(header, "version") != 1) throw FormatError("EEGB header: unsupported 'version'");

  auto subject = header_field<std::string>(header, "subject_id");
  auto fs = header_field<double>(header, "sampling_rate_hz");
  auto channels = header_field<std::vector<std::string>>(header, "channel_names");
  auto freqs = header_field<std::vector<double>>(header, "stimulus_frequencies_hz");
  auto trials = header_field<std::size_t>(header, "num_trials");
  auto num_channels = header_field<std::size_t>(header, "num_channels");
  auto num_samples = header_field<std::size_t>(header, "num_samples");
  auto labels = header_field<std::vector<int>>(header, "labels");
  if (num_channels != channels.size()) {
    throw FormatError("EEGB header: field 'num_channels' disagrees with 'channel_names'");
  }

  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t count = trials * num_channels * num_samples;
  if (payload.size() != count * 4) {
    throw SizeError("EEGB payload has " + std::to_string(payload.size()) + " bytes, header declares " +
                    std::to_string(count * 4));
  }
  std::vector<double> samples(count);
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < count; ++i) samples[i] = static_cast<double>(get_f32_le(bytes + 4 * i));
  return EegEpochSet(std::move(subject), fs, std::move(channels), std::move(freqs), trials, num_samples,
                     std::move(samples), std::move(labels));
}

void save_epochs(const EegEpochSet& set, const std::filesystem::path& path) {
  ordered_json header;
  header["format"] = "EEGB";
  header["version"] = 1;
  header["subject_id"] = set.subject_id();
  header["sampling_rate_hz"] = set.sampling_rate_hz();
  header["channel_names"] = set.channel_names();
  header["stimulus_frequencies_hz"] = set.stimulus_frequencies_hz();
  header["num_trials"] = set.num_trials();
  header["num_channels"] = set.num_channels();
  header["num_samples"] = set.num_samples();
  header["labels"] = set.labels();

  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + set.samples().size() * 4);
  for (double v : set.samples()) put_f32_le(out, static_cast<float>(v));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write '" + path.string() + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<EegEpochSet> load_epoch_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".eegb") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EegEpochSet> sets;
  for (const auto& f : files) sets.push_back(load_epochs(f));
  return sets;
}

// ---------------------------------------------------------------------------

namespace {

template <typename PerChannel>
EegEpochSet map_channels(const EegEpochSet& set, double new_fs, std::size_t new_samples, PerChannel&& fn) {
  std::vector<double> out;
  out.reserve(set.num_trials() * set.num_channels() * new_samples);
  for (std::size_t t = 0; t < set.num_trials(); ++t) {
    for (std::size_t c = 0; c < set.num_channels(); ++c) {
      std::vector<double> y = fn(set.channel(t, c));
      out.insert(out.end(), y.begin(), y.end());
    }
  }
  return EegEpochSet(set.subject_id(), new_fs, set.channel_names(), set.stimulus_frequencies_hz(),
                     set.num_trials(), new_samples, std::move(out), set.labels());
}

constexpr int kFilterOrder = 4;

}  // namespace

EegEpochSet bandpass(const EegEpochSet& set, double low_hz, double high_hz) {
  const SosFilter sos = butterworth_bandpass(kFilterOrder, low_hz, high_hz, set.sampling_rate_hz());
  return map_channels(set, set.sampling_rate_hz(), set.num_samples(),
                      [&sos](std::span<const double> x) { return sos_filtfilt(sos, x); });
}

EegEpochSet decimate(const EegEpochSet& set, int factor) {
  if (factor < 1) throw ParameterError("decimation factor must be >= 1, got " + std::to_string(factor));
  const auto f = static_cast<std::size_t>(factor);
  if (set.num_samples() % f != 0) {
    throw ParameterError("decimation factor " + std::to_string(factor) + " does not divide " +
                         std::to_string(set.num_samples()) + " samples");
  }
  if (factor == 1) return set;
  const double new_fs = set.sampling_rate_hz() / factor;
  const SosFilter sos = butterworth_lowpass(kFilterOrder, 0.8 * new_fs / 2.0, set.sampling_rate_hz());
  return map_channels(set, new_fs, set.num_samples() / f, [&sos, f](std::span<const double> x) {
    const std::vector<double> smooth = sos_filtfilt(sos, x);
    std::vector<double> y;
    y.reserve(smooth.size() / f);
    for (std::size_t i = 0; i < smooth.size(); i += f) y.push_back(smooth[i]);
    return y;
  });
}

EegEpochSet select_channels(const EegEpochSet& set, const std::vector<std::string>& names) {
  if (names.empty()) throw ParameterError("select_channels: no channel names given");
  std::vector<std::size_t> picks;
  for (const auto& name : names) {
    const auto& all = set.channel_names();
    const auto it = std::find(all.begin(), all.end(), name);
    if (it == all.end()) {
      std::string available;
      for (const auto& a : all) available += (available.empty() ? "" : ", ") + a;
      throw LookupError("unknown channel '" + name + "'; available: " + available);
    }
    picks.push_back(static_cast<std::size_t>(it - all.begin()));
  }
  std::vector<double> out;
  out.reserve(set.num_trials() * picks.size() * set.num_samples());
  for (std::size_t t = 0; t < set.num_trials(); ++t) {
    for (std::size_t c : picks) {
      const auto ch = set.channel(t, c);
      out.insert(out.end(), ch.begin(), ch.end());
    }
  }
  return EegEpochSet(set.subject_id(), set.sampling_rate_hz(), names, set.stimulus_frequencies_hz(),
                     set.num_trials(), set.num_samples(), std::move(out), set.labels());
}

EegEpochSet crop_window(const EegEpochSet& set, double start_s, double length_s) {
  const double fs = set.sampling_rate_hz();
  const double exact = length_s * fs;
  const double count = std::round(exact);
  if (!(length_s > 0.0) || count < 1.0 || std::abs(exact - count) > 1e-6) {
    throw ParameterError("window length " + std::to_string(length_s) + " s is not a positive whole number of samples at " +
                         std::to_string(fs) + " Hz");
  }
  const double offset = std::round(start_s * fs);
  if (start_s < 0.0 || offset + count > static_cast<double>(set.num_samples())) {
    throw RangeError("window [" + std::to_string(start_s) + ", " + std::to_string(start_s + length_s) +
                     "] s exceeds the " + std::to_string(set.duration_s()) + " s trial");
  }
  const auto first = static_cast<std::size_t>(offset);
  const auto n = static_cast<std::size_t>(count);
  if (first == 0 && n == set.num_samples()) return set;
  std::vector<double> out;
  out.reserve(set.num_trials() * set.num_channels() * n);
  for (std::size_t t = 0; t < set.num_trials(); ++t) {
    for (std::size_t c = 0; c < set.num_channels(); ++c) {
      const auto ch = set.channel(t, c).subspan(first, n);
      out.insert(out.end(), ch.begin(), ch.end());
    }
  }
  return EegEpochSet(set.subject_id(), fs, set.channel_names(), set.stimulus_frequencies_hz(), set.num_trials(), n,
                     std::move(out), set.labels());
}

}  // namespace bima::data
