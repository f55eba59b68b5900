#include "bima/config.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include "bima/error.hpp"

namespace bima::config {
namespace {

// Walks one JSON object section, assigning the keys it knows and rejecting
// everything else once the caller is done.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ParameterError("config: section '" + name_ + "' must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ParameterError("config: " + name_ + "." + key + " has the wrong type");
    }
  }

  void read_size(const char* key, std::size_t& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0)) {
      throw ParameterError("config: " + name_ + "." + key + " must be a non-negative integer");
    }
    out = it->get<std::size_t>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ParameterError("config: unknown key '" + name_ + "." + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace

void validate(const DataConfig& cfg) {
  if (cfg.decimate < 1) throw ParameterError("data: decimate must be >= 1");
  if (cfg.start_s < 0.0) throw ParameterError("data: start_s must be >= 0");
  if (cfg.window_s < 0.0) throw ParameterError("data: window_s must be >= 0");
  const bool lo = cfg.bandpass_low_hz > 0.0, hi = cfg.bandpass_high_hz > 0.0;
  if (lo != hi) throw ParameterError("data: bandpass_low_hz and bandpass_high_hz must be set together");
  if (lo && cfg.bandpass_low_hz >= cfg.bandpass_high_hz) {
    throw ParameterError("data: bandpass_low_hz must be below bandpass_high_hz");
  }
}

void validate(const EvalConfig& cfg) {
  if (!(cfg.gaze_s >= 0.0)) throw ParameterError("eval: gaze_s must be >= 0");
}

Json to_json(const DataConfig& cfg) {
  return Json{{"dir", cfg.dir},
              {"channels", cfg.channels},
              {"bandpass_low_hz", cfg.bandpass_low_hz},
              {"bandpass_high_hz", cfg.bandpass_high_hz},
              {"decimate", cfg.decimate},
              {"start_s", cfg.start_s},
              {"window_s", cfg.window_s}};
}

Json to_json(const model::BimaConfig& cfg) {
  return Json{{"wmf_kernels", cfg.wmf_kernels},
              {"num_heads", cfg.num_heads},
              {"encoder_layers", cfg.encoder_layers},
              {"ff_hidden", cfg.ff_hidden},
              {"mlp_hidden", cfg.mlp_hidden},
              {"mask_enabled", cfg.mask_enabled},
              {"pe_enabled", cfg.pe_enabled},
              {"wmf_enabled", cfg.wmf_enabled},
              {"na_stream_enabled", cfg.na_stream_enabled},
              {"sa_stream_enabled", cfg.sa_stream_enabled},
              {"mask_penalty", cfg.mask_penalty}};
}

Json to_json(const spectral::SpectralConfig& cfg) {
  return Json{{"resolution_hz", cfg.resolution_hz},
              {"band_low_hz", cfg.band_low_hz},
              {"band_high_hz", cfg.band_high_hz},
              {"amplitude_scale", std::string(spectral::to_string(cfg.amplitude_scale))}};
}

Json to_json(const train::TrainConfig& cfg) {
  return Json{{"learning_rate", cfg.learning_rate},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"eps_adam", cfg.eps_adam},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"dropout_p", cfg.dropout_p},
              {"seed", cfg.seed},
              {"shuffle", cfg.shuffle}};
}

Json to_json(const EvalConfig& cfg) { return Json{{"gaze_s", cfg.gaze_s}}; }

Json to_json(const RunConfig& cfg) {
  return Json{{"data", to_json(cfg.data)},
              {"spectral", to_json(cfg.train.spectral)},
              {"bima", to_json(cfg.train.bima)},
              {"train", to_json(cfg.train)},
              {"eval", to_json(cfg.eval)}};
}

DataConfig data_from_json(const Json& j, DataConfig base) {
  Section s(j, "data");
  s.read("dir", base.dir);
  s.read("channels", base.channels);
  s.read("bandpass_low_hz", base.bandpass_low_hz);
  s.read("bandpass_high_hz", base.bandpass_high_hz);
  s.read("decimate", base.decimate);
  s.read("start_s", base.start_s);
  s.read("window_s", base.window_s);
  s.finish();
  validate(base);
  return base;
}

model::BimaConfig bima_from_json(const Json& j, model::BimaConfig base) {
  Section s(j, "bima");
  s.read_size("wmf_kernels", base.wmf_kernels);
  s.read_size("num_heads", base.num_heads);
  s.read_size("encoder_layers", base.encoder_layers);
  s.read_size("ff_hidden", base.ff_hidden);
  s.read_size("mlp_hidden", base.mlp_hidden);
  s.read("mask_enabled", base.mask_enabled);
  s.read("pe_enabled", base.pe_enabled);
  s.read("wmf_enabled", base.wmf_enabled);
  s.read("na_stream_enabled", base.na_stream_enabled);
  s.read("sa_stream_enabled", base.sa_stream_enabled);
  s.read("mask_penalty", base.mask_penalty);
  s.finish();
  if (!base.na_stream_enabled && !base.sa_stream_enabled) {
    throw ParameterError("bima: at least one of the two streams must stay enabled");
  }
  return base;
}

spectral::SpectralConfig spectral_from_json(const Json& j, spectral::SpectralConfig base) {
  Section s(j, "spectral");
  s.read("resolution_hz", base.resolution_hz);
  s.read("band_low_hz", base.band_low_hz);
  s.read("band_high_hz", base.band_high_hz);
  std::string scale(spectral::to_string(base.amplitude_scale));
  s.read("amplitude_scale", scale);
  base.amplitude_scale = spectral::parse_amplitude_scale(scale);
  s.finish();
  return base;
}

train::TrainConfig train_from_json(const Json& j, train::TrainConfig base) {
  Section s(j, "train");
  s.read("learning_rate", base.learning_rate);
  s.read("beta1", base.beta1);
  s.read("beta2", base.beta2);
  s.read("eps_adam", base.eps_adam);
  s.read_size("batch_size", base.batch_size);
  s.read_size("epochs", base.epochs);
  s.read("dropout_p", base.dropout_p);
  s.read("seed", base.seed);
  s.read("shuffle", base.shuffle);
  s.finish();
  train::validate(base);
  return base;
}

EvalConfig eval_from_json(const Json& j, EvalConfig base) {
  Section s(j, "eval");
  s.read("gaze_s", base.gaze_s);
  s.finish();
  validate(base);
  return base;
}

RunConfig run_from_json(const Json& j, RunConfig base) {
  if (!j.is_object()) throw ParameterError("config: top level must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "data") {
      base.data = data_from_json(*it, base.data);
    } else if (key == "spectral") {
      base.train.spectral = spectral_from_json(*it, base.train.spectral);
    } else if (key == "bima") {
      base.train.bima = bima_from_json(*it, base.train.bima);
    } else if (key == "train") {
      base.train = train_from_json(*it, base.train);
    } else if (key == "eval") {
      base.eval = eval_from_json(*it, base.eval);
    } else {
      throw ParameterError("config: unknown section '" + key + "' (expected data, spectral, bima, train, eval)");
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_from_json(j, base);
}

}  // namespace bima::config
