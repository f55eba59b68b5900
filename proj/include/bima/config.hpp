#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bima/model.hpp"
#include "bima/spectral.hpp"
#include "bima/train.hpp"

namespace bima::config {

using Json = nlohmann::json;

// Preprocessing applied to every loaded subject before training. Zero
// values switch the corresponding step off.
struct DataConfig {
  std::string dir;
  std::vector<std::string> channels;  // empty keeps all channels
  double bandpass_low_hz = 0.0;
  double bandpass_high_hz = 0.0;
  int decimate = 1;
  double start_s = 0.0;
  double window_s = 0.0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct EvalConfig {
  double gaze_s = 0.0;  // added to the window in the ITR selection time

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct RunConfig {
  DataConfig data;
  train::TrainConfig train;  // carries the bima and spectral sections
  EvalConfig eval;
};

void validate(const DataConfig& cfg);
void validate(const EvalConfig& cfg);

// Section (de)serialization. Readers start from `base`, overwrite only the
// keys present and throw ParameterError on unknown keys or wrong types.
Json to_json(const DataConfig& cfg);
Json to_json(const model::BimaConfig& cfg);
Json to_json(const spectral::SpectralConfig& cfg);
Json to_json(const train::TrainConfig& cfg);  // train keys only
Json to_json(const EvalConfig& cfg);
Json to_json(const RunConfig& cfg);            // all five sections

DataConfig data_from_json(const Json& j, DataConfig base = {});
model::BimaConfig bima_from_json(const Json& j, model::BimaConfig base = {});
spectral::SpectralConfig spectral_from_json(const Json& j, spectral::SpectralConfig base = {});
train::TrainConfig train_from_json(const Json& j, train::TrainConfig base = {});
EvalConfig eval_from_json(const Json& j, EvalConfig base = {});
RunConfig run_from_json(const Json& j, RunConfig base = {});

// Reads a config file on top of `base`; throws IoError / ParameterError.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace bima::config
