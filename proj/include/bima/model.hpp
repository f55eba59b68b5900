#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bima/functional.hpp"
#include "bima/param_store.hpp"
#include "bima/spectral.hpp"
#include "bima/tape.hpp"
#include "bima/tensor.hpp"

namespace bima::model {

// Zero for wmf_kernels / ff_hidden / mlp_hidden means "use the default"
// (2C, 2N and 6K respectively); resolve() fills them in.
struct BimaConfig {
  std::size_t num_channels = 0;
  std::size_t num_classes = 0;
  std::size_t wmf_kernels = 0;
  std::size_t num_heads = 2;
  std::size_t encoder_layers = 1;
  std::size_t ff_hidden = 0;
  std::size_t mlp_hidden = 0;
  double dropout_p = 0.5;
  bool mask_enabled = true;
  bool pe_enabled = true;
  bool wmf_enabled = true;
  bool na_stream_enabled = true;
  bool sa_stream_enabled = true;
  double mask_penalty = -1e9;

  friend bool operator==(const BimaConfig&, const BimaConfig&) = default;
};

BimaConfig resolve(BimaConfig cfg);

// Throws ParameterError on an inconsistent (resolved) configuration.
void validate(const BimaConfig& cfg);

enum class Stream { native, spectral };
const char* stream_prefix(Stream s);

struct ModelParams {
  BimaConfig config;  // resolved
  std::size_t native_tokens = 0;    // T_samples of the native input
  std::size_t spectral_tokens = 0;  // 2F of the spectral input
  nn::ParamStore store;

  std::size_t fused_tokens() const;
};

// Glorot-uniform weights, zero biases, unit/zero layer-norm affine.
ModelParams init_params(const BimaConfig& cfg, std::size_t native_tokens, std::size_t spectral_tokens,
                        std::uint64_t seed);

// Names and shapes in creation order; init_params and checkpoint loading both use it.
std::vector<std::pair<std::string, nn::Shape>> param_layout(const BimaConfig& cfg, std::size_t native_tokens,
                                                            std::size_t spectral_tokens);

// --- plain forward operations ---------------------------------------------

nn::Tensor wmf_forward(const nn::Tensor& x, const nn::Tensor& weights);  // [C x T], [N x C] -> [N x T]

nn::Tensor positional_encoding(std::size_t tokens, std::size_t d);

// Fixed C -> N map used when the learned filter is ablated: row i selects
// channel i / (N / C).
nn::Tensor channel_replication(std::size_t channels, std::size_t kernels);

struct AttentionResult {
  nn::Tensor output;   // [T x dv]
  nn::Tensor weights;  // [T x T]
};

AttentionResult masked_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v, bool mask_enabled,
                                 double penalty);

nn::Tensor fuse_tokens(const nn::Tensor& na_tokens, const nn::Tensor& sa_tokens);

// Per-channel z-score over time; constant channels become zero.
nn::Tensor zscore_channels(const nn::Tensor& trial);

// --- differentiable assembly -----------------------------------------------

// Inputs of both streams for one trial, computed once and reused every epoch.
struct TrialFeatures {
  nn::Tensor native;    // z-scored [C x T]
  nn::Tensor spectral;  // [C x 2F]
};

TrialFeatures prepare_features(const nn::Tensor& trial, double fs, const spectral::SpectralConfig& cfg);

struct ForwardTrace {
  std::vector<nn::AttentionTrace> attention;  // one per encoder layer, native layers first
  std::size_t fused_tokens = 0;
};

nn::Var encoder_layer(nn::Tape& tape, ModelParams& params, const std::string& prefix, nn::Var x, bool training,
                      nn::Rng& rng, nn::AttentionTrace* trace = nullptr);

nn::Var stream_forward(nn::Tape& tape, ModelParams& params, Stream stream, const nn::Tensor& input, bool training,
                       nn::Rng& rng, ForwardTrace* trace = nullptr);

nn::Var mlp_head(nn::Tape& tape, ModelParams& params, nn::Var fused, bool training, nn::Rng& rng);

// Records the whole network on `tape`; returns logits [1 x K].
nn::Var forward(nn::Tape& tape, ModelParams& params, const TrialFeatures& features, bool training, nn::Rng& rng,
                ForwardTrace* trace = nullptr);

// Encoder on its own, evaluated without gradients.
nn::Tensor mhsa_encoder_forward(ModelParams& params, Stream stream, std::size_t layer, const nn::Tensor& tokens);

// Head on its own: fused [T_total x N] -> logits [K].
nn::Tensor mlp_head_forward(ModelParams& params, const nn::Tensor& fused);

// Raw [C x T] trial -> logits [K].
nn::Tensor model_forward(const nn::Tensor& trial, ModelParams& params, const spectral::SpectralConfig& spectral_cfg,
                         double fs, bool training, nn::Rng& rng);

}  // namespace bima::model
