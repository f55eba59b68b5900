#pragma once

#include <cstdint>
#include <filesystem>

#include "bima/model.hpp"
#include "bima/spectral.hpp"

namespace bima::model {

// Everything needed to rebuild a trained model and feed it new trials.
struct Checkpoint {
  ModelParams params;
  spectral::SpectralConfig spectral;
  double sampling_rate_hz = 0.0;
  std::uint64_t seed = 0;
};

// File layout: one line of JSON manifest (format tag, version, seed, sampling
// rate, token counts, model and spectral configs, parameter names and shapes)
// terminated by '\n', followed by every parameter value as a little-endian
// IEEE-754 double in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws IoError when the file cannot be read and FormatError when the
// manifest or payload is inconsistent.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bima::model
