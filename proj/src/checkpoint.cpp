#include "bima/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "bima/config.hpp"
#include "bima/error.hpp"

namespace bima::model {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kFormat = "BIMA-CKPT";
constexpr int kVersion = 1;

void put_f64_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

template <typename T>
T field(const ordered_json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) throw FormatError(std::string("checkpoint manifest: missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("checkpoint manifest: field '") + name + "' has the wrong type");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const ModelParams& p = ckpt.params;
  ordered_json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["seed"] = ckpt.seed;
  manifest["sampling_rate_hz"] = ckpt.sampling_rate_hz;
  manifest["num_channels"] = p.config.num_channels;
  manifest["num_classes"] = p.config.num_classes;
  manifest["dropout_p"] = p.config.dropout_p;
  manifest["native_tokens"] = p.native_tokens;
  manifest["spectral_tokens"] = p.spectral_tokens;
  manifest["bima"] = ordered_json::parse(config::to_json(p.config).dump());
  manifest["spectral"] = ordered_json::parse(config::to_json(ckpt.spectral).dump());
  ordered_json params = ordered_json::array();
  for (std::size_t i = 0; i < p.store.size(); ++i) {
    params.push_back({{"name", p.store.name(i)}, {"shape", p.store.value(i).shape()}});
  }
  manifest["params"] = std::move(params);

  std::string bytes = manifest.dump();
  bytes.push_back('\n');
  bytes.reserve(bytes.size() + 8 * p.store.num_scalars());
  for (std::size_t i = 0; i < p.store.size(); ++i) {
    for (double v : p.store.value(i).values()) put_f64_le(bytes, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint: missing manifest line in '" + path.string() + "'");
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!manifest.is_object()) throw FormatError("checkpoint manifest must be a JSON object");
  if (field<std::string>(manifest, "format") != kFormat) throw FormatError("checkpoint: not a BIMA-CKPT file");
  if (field<int>(manifest, "version") != kVersion) throw FormatError("checkpoint: unsupported version");

  Checkpoint ckpt;
  ckpt.seed = field<std::uint64_t>(manifest, "seed");
  ckpt.sampling_rate_hz = field<double>(manifest, "sampling_rate_hz");
  BimaConfig cfg;
  try {
    cfg = config::bima_from_json(config::Json::parse(manifest.at("bima").dump()));
    ckpt.spectral = config::spectral_from_json(config::Json::parse(manifest.at("spectral").dump()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  cfg.num_channels = field<std::size_t>(manifest, "num_channels");
  cfg.num_classes = field<std::size_t>(manifest, "num_classes");
  cfg.dropout_p = field<double>(manifest, "dropout_p");
  const auto native_tokens = field<std::size_t>(manifest, "native_tokens");
  const auto spectral_tokens = field<std::size_t>(manifest, "spectral_tokens");

  try {
    validate(resolve(cfg));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  const auto layout = param_layout(resolve(cfg), native_tokens, spectral_tokens);
  const auto& listed = manifest.at("params");
  if (!listed.is_array() || listed.size() != layout.size()) {
    throw FormatError("checkpoint: parameter list does not match the model configuration");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (field<std::string>(listed[i], "name") != layout[i].first ||
        field<nn::Shape>(listed[i], "shape") != layout[i].second) {
      throw FormatError("checkpoint: parameter " + std::to_string(i) + " is not " + layout[i].first + " " +
                        nn::shape_to_string(layout[i].second));
    }
  }

  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t scalars = 0;
  for (const auto& [name, shape] : layout) scalars += nn::shape_numel(shape);
  if (payload.size() != 8 * scalars) {
    throw FormatError("checkpoint: payload holds " + std::to_string(payload.size()) + " bytes, expected " +
                      std::to_string(8 * scalars));
  }

  ckpt.params.config = resolve(cfg);
  ckpt.params.native_tokens = native_tokens;
  ckpt.params.spectral_tokens = spectral_tokens;
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
  for (const auto& [name, shape] : layout) {
    nn::Tensor value(shape);
    for (double& v : value.values()) {
      v = get_f64_le(bytes);
      bytes += 8;
    }
    ckpt.params.store.add(name, std::move(value));
  }
  return ckpt;
}

}  // namespace bima::model
