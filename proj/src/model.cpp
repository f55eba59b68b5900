#include "bima/model.hpp"

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>

#include "bima/error.hpp"
#include "bima/kernels.hpp"

namespace bima::model {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

BimaConfig resolve(BimaConfig cfg) {
  if (cfg.wmf_kernels == 0) cfg.wmf_kernels = 2 * cfg.num_channels;
  if (cfg.ff_hidden == 0) cfg.ff_hidden = 2 * cfg.wmf_kernels;
  if (cfg.mlp_hidden == 0) cfg.mlp_hidden = 6 * cfg.num_classes;
  return cfg;
}

void validate(const BimaConfig& cfg) {
  if (cfg.num_channels < 1) throw ParameterError("bima: num_channels must be >= 1");
  if (cfg.num_classes < 2) throw ParameterError("bima: num_classes must be >= 2");
  if (cfg.wmf_kernels < 1 || cfg.ff_hidden < 1 || cfg.mlp_hidden < 1) {
    throw ParameterError("bima: wmf_kernels, ff_hidden and mlp_hidden must be resolved to positive sizes");
  }
  if (cfg.num_heads < 1 || cfg.wmf_kernels % cfg.num_heads != 0) {
    throw ParameterError("bima: wmf_kernels (" + std::to_string(cfg.wmf_kernels) + ") must be divisible by num_heads (" +
                         std::to_string(cfg.num_heads) + ")");
  }
  if (cfg.pe_enabled && cfg.wmf_kernels % 2 != 0) {
    throw ParameterError("bima: positional encoding needs an even wmf_kernels, got " + std::to_string(cfg.wmf_kernels));
  }
  if (!cfg.wmf_enabled && cfg.wmf_kernels % cfg.num_channels != 0) {
    throw ParameterError("bima: with the learned filter disabled, wmf_kernels must be a multiple of num_channels");
  }
  if (!cfg.na_stream_enabled && !cfg.sa_stream_enabled) {
    throw ParameterError("bima: at least one of the native and spectral streams must be enabled");
  }
  if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) throw ParameterError("bima: dropout_p must lie in [0, 1)");
  if (!(cfg.mask_penalty < 0.0) || !std::isfinite(cfg.mask_penalty)) {
    throw ParameterError("bima: mask_penalty must be a finite negative number");
  }
}

const char* stream_prefix(Stream s) { return s == Stream::native ? "na" : "sa"; }

std::size_t ModelParams::fused_tokens() const {
  return (config.na_stream_enabled ? native_tokens : 0) + (config.sa_stream_enabled ? spectral_tokens : 0);
}

std::vector<std::pair<std::string, Shape>> param_layout(const BimaConfig& cfg, std::size_t native_tokens,
                                                        std::size_t spectral_tokens) {
  const std::size_t c = cfg.num_channels, n = cfg.wmf_kernels, ff = cfg.ff_hidden;
  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t tokens = 0;
  for (Stream s : {Stream::native, Stream::spectral}) {
    const bool on = s == Stream::native ? cfg.na_stream_enabled : cfg.sa_stream_enabled;
    if (!on) continue;
    tokens += s == Stream::native ? native_tokens : spectral_tokens;
    const std::string p = stream_prefix(s);
    if (cfg.wmf_enabled) layout.push_back({p + ".wmf.weight", {n, c}});
    layout.push_back({p + ".wmf_norm.gamma", {n}});
    layout.push_back({p + ".wmf_norm.beta", {n}});
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
      const std::string e = p + ".enc" + std::to_string(l);
      layout.push_back({e + ".wq", {n, n}});
      layout.push_back({e + ".wk", {n, n}});
      layout.push_back({e + ".wv", {n, n}});
      layout.push_back({e + ".wo", {n, n}});
      layout.push_back({e + ".bo", {n}});
      layout.push_back({e + ".norm1.gamma", {n}});
      layout.push_back({e + ".norm1.beta", {n}});
      layout.push_back({e + ".ff1.weight", {n, ff}});
      layout.push_back({e + ".ff1.bias", {ff}});
      layout.push_back({e + ".ff2.weight", {ff, n}});
      layout.push_back({e + ".ff2.bias", {n}});
      layout.push_back({e + ".norm2.gamma", {n}});
      layout.push_back({e + ".norm2.beta", {n}});
    }
  }
  layout.push_back({"head.fc1.weight", {tokens * n, cfg.mlp_hidden}});
  layout.push_back({"head.fc1.bias", {cfg.mlp_hidden}});
  layout.push_back({"head.norm.gamma", {cfg.mlp_hidden}});
  layout.push_back({"head.norm.beta", {cfg.mlp_hidden}});
  layout.push_back({"head.fc2.weight", {cfg.mlp_hidden, cfg.num_classes}});
  layout.push_back({"head.fc2.bias", {cfg.num_classes}});
  return layout;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_weight(const std::string& name) {
  return ends_with(name, ".weight") || ends_with(name, ".wq") || ends_with(name, ".wk") || ends_with(name, ".wv") ||
         ends_with(name, ".wo");
}

}  // namespace

ModelParams init_params(const BimaConfig& raw, std::size_t native_tokens, std::size_t spectral_tokens,
                        std::uint64_t seed) {
  ModelParams params;
  params.config = resolve(raw);
  validate(params.config);
  if (params.config.na_stream_enabled && native_tokens == 0) throw ParameterError("bima: native stream has no tokens");
  if (params.config.sa_stream_enabled && spectral_tokens == 0) {
    throw ParameterError("bima: spectral stream has no tokens");
  }
  params.native_tokens = native_tokens;
  params.spectral_tokens = spectral_tokens;

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1417u};
  nn::Rng rng(seq);
  for (auto& [name, shape] : param_layout(params.config, native_tokens, spectral_tokens)) {
    Tensor value(shape);
    if (is_weight(name)) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (double& v : value.values()) v = (2.0 * nn::uniform01(rng) - 1.0) * limit;
    } else if (ends_with(name, ".gamma")) {
      value.fill(1.0);
    }
    params.store.add(name, std::move(value));
  }
  return params;
}

Tensor wmf_forward(const Tensor& x, const Tensor& weights) {
  if (x.rank() != 2 || weights.rank() != 2 || weights.dim(1) != x.dim(0)) {
    throw ShapeError("wmf: input " + nn::shape_to_string(x.shape()) + " incompatible with weights " +
                     nn::shape_to_string(weights.shape()));
  }
  return nn::matmul(weights, x);
}

Tensor positional_encoding(std::size_t tokens, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw ParameterError("positional encoding needs an even width, got " + std::to_string(d));
  Tensor pe({tokens, d});
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double rate = std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(d));
    for (std::size_t pos = 0; pos < tokens; ++pos) {
      const double angle = static_cast<double>(pos) * rate;
      pe.at(pos, 2 * i) = std::sin(angle);
      pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor channel_replication(std::size_t channels, std::size_t kernels) {
  if (channels == 0 || kernels % channels != 0) {
    throw ParameterError("channel replication needs kernels divisible by channels");
  }
  const std::size_t repeat = kernels / channels;
  Tensor r({kernels, channels});
  for (std::size_t i = 0; i < kernels; ++i) r.at(i, i / repeat) = 1.0;
  return r;
}

AttentionResult masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool mask_enabled,
                                 double penalty) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.shape() != k.shape() || v.dim(0) != q.dim(0) ||
      q.dim(1) == 0) {
    throw ShapeError("masked_attention: q " + nn::shape_to_string(q.shape()) + ", k " +
                     nn::shape_to_string(k.shape()) + ", v " + nn::shape_to_string(v.shape()));
  }
  const std::size_t t = q.dim(0), dk = q.dim(1), dv = v.dim(1);
  AttentionResult result{Tensor({t, dv}), Tensor({t, t})};
  if (t == 0) return result;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  if (dv == dk) {
    nn::attention_head_forward(t, dk, q.data(), dk, k.data(), dk, v.data(), dv, scale, mask_enabled, penalty,
                               result.weights.data(), result.output.data(), dv);
  } else {
    const Tensor unused_v({t, dk});
    Tensor scratch({t, dk});
    nn::attention_head_forward(t, dk, q.data(), dk, k.data(), dk, unused_v.data(), dk, scale, mask_enabled, penalty,
                               result.weights.data(), scratch.data(), dk);
    result.output = nn::matmul(result.weights, v);
  }
  return result;
}

Tensor fuse_tokens(const Tensor& na_tokens, const Tensor& sa_tokens) {
  const bool has_na = !na_tokens.empty(), has_sa = !sa_tokens.empty();
  if (!has_na && !has_sa) throw ShapeError("fuse_tokens: both streams are empty");
  if (!has_sa) return na_tokens;
  if (!has_na) return sa_tokens;
  if (na_tokens.rank() != 2 || sa_tokens.rank() != 2 || na_tokens.dim(1) != sa_tokens.dim(1)) {
    throw ShapeError("fuse_tokens: feature width mismatch " + nn::shape_to_string(na_tokens.shape()) + " vs " +
                     nn::shape_to_string(sa_tokens.shape()));
  }
  Tensor out({na_tokens.dim(0) + sa_tokens.dim(0), na_tokens.dim(1)});
  std::copy(na_tokens.values().begin(), na_tokens.values().end(), out.values().begin());
  std::copy(sa_tokens.values().begin(), sa_tokens.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(na_tokens.size()));
  return out;
}

Tensor zscore_channels(const Tensor& trial) {
  if (trial.rank() != 2) throw ShapeError("zscore: expected [C x T], got " + nn::shape_to_string(trial.shape()));
  const std::size_t channels = trial.dim(0), samples = trial.dim(1);
  Tensor out(trial.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* x = trial.data() + c * samples;
    double* y = out.data() + c * samples;
    double mean = 0.0;
    for (std::size_t t = 0; t < samples; ++t) mean += x[t];
    mean /= static_cast<double>(samples);
    double var = 0.0;
    for (std::size_t t = 0; t < samples; ++t) var += (x[t] - mean) * (x[t] - mean);
    var /= static_cast<double>(samples);
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    for (std::size_t t = 0; t < samples; ++t) y[t] = (x[t] - mean) * inv;
  }
  return out;
}

TrialFeatures prepare_features(const Tensor& trial, double fs, const spectral::SpectralConfig& cfg) {
  return {zscore_channels(trial), spectral::complex_spectrum(trial, fs, cfg).values};
}

namespace {

Var p(Tape& tape, ModelParams& params, const std::string& name) {
  return tape.param(params.store, params.store.index(name));
}

const Tensor& cached_positional_encoding(std::size_t tokens, std::size_t d) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, Tensor> cache;
  auto it = cache.find({tokens, d});
  if (it == cache.end()) it = cache.emplace(std::make_pair(tokens, d), positional_encoding(tokens, d)).first;
  return it->second;
}

}  // namespace

Var encoder_layer(Tape& tape, ModelParams& params, const std::string& prefix, Var x, bool training, nn::Rng& rng,
                  nn::AttentionTrace* trace) {
  const BimaConfig& cfg = params.config;
  const Var none{};
  Var q = nn::linear(tape, x, p(tape, params, prefix + ".wq"), none);
  Var k = nn::linear(tape, x, p(tape, params, prefix + ".wk"), none);
  Var v = nn::linear(tape, x, p(tape, params, prefix + ".wv"), none);
  Var attn = nn::multi_head_attention(tape, q, k, v, cfg.num_heads, cfg.mask_enabled, cfg.mask_penalty, trace);
  Var proj = nn::linear(tape, attn, p(tape, params, prefix + ".wo"), p(tape, params, prefix + ".bo"));
  proj = nn::dropout(tape, proj, cfg.dropout_p, training, rng);
  Var h = nn::layer_norm(tape, nn::add(tape, x, proj), p(tape, params, prefix + ".norm1.gamma"),
                         p(tape, params, prefix + ".norm1.beta"));

  Var f = nn::linear(tape, h, p(tape, params, prefix + ".ff1.weight"), p(tape, params, prefix + ".ff1.bias"));
  f = nn::dropout(tape, nn::gelu(tape, f), cfg.dropout_p, training, rng);
  f = nn::linear(tape, f, p(tape, params, prefix + ".ff2.weight"), p(tape, params, prefix + ".ff2.bias"));
  f = nn::dropout(tape, f, cfg.dropout_p, training, rng);
  return nn::layer_norm(tape, nn::add(tape, h, f), p(tape, params, prefix + ".norm2.gamma"),
                        p(tape, params, prefix + ".norm2.beta"));
}

Var stream_forward(Tape& tape, ModelParams& params, Stream stream, const Tensor& input, bool training, nn::Rng& rng,
                   ForwardTrace* trace) {
  const BimaConfig& cfg = params.config;
  const std::string prefix = stream_prefix(stream);
  const std::size_t expected = stream == Stream::native ? params.native_tokens : params.spectral_tokens;
  if (input.rank() != 2 || input.dim(0) != cfg.num_channels || input.dim(1) != expected) {
    throw ShapeError(prefix + " stream: expected [" + std::to_string(cfg.num_channels) + " x " +
                     std::to_string(expected) + "], got " + nn::shape_to_string(input.shape()));
  }
  Var x = tape.constant(input);
  Var filter = cfg.wmf_enabled ? p(tape, params, prefix + ".wmf.weight")
                               : tape.constant(channel_replication(cfg.num_channels, cfg.wmf_kernels));
  Var tokens = nn::transpose(tape, nn::matmul(tape, filter, x));  // [T x N]
  tokens = nn::layer_norm(tape, tokens, p(tape, params, prefix + ".wmf_norm.gamma"),
                          p(tape, params, prefix + ".wmf_norm.beta"));
  tokens = nn::dropout(tape, nn::gelu(tape, tokens), cfg.dropout_p, training, rng);
  if (cfg.pe_enabled) {
    tokens = nn::add(tape, tokens, tape.constant(cached_positional_encoding(expected, cfg.wmf_kernels)));
  }
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    nn::AttentionTrace* layer_trace = nullptr;
    if (trace != nullptr) layer_trace = &trace->attention.emplace_back();
    tokens = encoder_layer(tape, params, prefix + ".enc" + std::to_string(l), tokens, training, rng, layer_trace);
  }
  return tokens;
}

Var mlp_head(Tape& tape, ModelParams& params, Var fused, bool training, nn::Rng& rng) {
  const BimaConfig& cfg = params.config;
  Var h = nn::linear(tape, nn::flatten(tape, fused), p(tape, params, "head.fc1.weight"),
                     p(tape, params, "head.fc1.bias"));
  h = nn::layer_norm(tape, h, p(tape, params, "head.norm.gamma"), p(tape, params, "head.norm.beta"));
  h = nn::dropout(tape, nn::gelu(tape, h), cfg.dropout_p, training, rng);
  return nn::linear(tape, h, p(tape, params, "head.fc2.weight"), p(tape, params, "head.fc2.bias"));
}

Var forward(Tape& tape, ModelParams& params, const TrialFeatures& features, bool training, nn::Rng& rng,
            ForwardTrace* trace) {
  const BimaConfig& cfg = params.config;
  Var fused;
  if (cfg.na_stream_enabled) fused = stream_forward(tape, params, Stream::native, features.native, training, rng, trace);
  if (cfg.sa_stream_enabled) {
    Var sa = stream_forward(tape, params, Stream::spectral, features.spectral, training, rng, trace);
    fused = fused.valid() ? nn::concat_rows(tape, fused, sa) : sa;
  }
  if (trace != nullptr) trace->fused_tokens = tape.value(fused).dim(0);
  return mlp_head(tape, params, fused, training, rng);
}

Tensor mhsa_encoder_forward(ModelParams& params, Stream stream, std::size_t layer, const Tensor& tokens) {
  Tape tape;
  nn::Rng rng(0);
  Var x = tape.constant(tokens);
  const std::string prefix = std::string(stream_prefix(stream)) + ".enc" + std::to_string(layer);
  return tape.value(encoder_layer(tape, params, prefix, x, false, rng));
}

Tensor mlp_head_forward(ModelParams& params, const Tensor& fused) {
  const std::size_t width = params.store.value(params.store.index("head.fc1.weight")).dim(0);
  if (fused.size() != width) {
    throw ShapeError("mlp_head: fused tokens " + nn::shape_to_string(fused.shape()) + " flatten to " +
                     std::to_string(fused.size()) + " values, head expects " + std::to_string(width));
  }
  Tape tape;
  nn::Rng rng(0);
  Tensor logits = tape.value(mlp_head(tape, params, tape.constant(fused), false, rng));
  logits.reshape({logits.size()});
  return logits;
}

Tensor model_forward(const Tensor& trial, ModelParams& params, const spectral::SpectralConfig& spectral_cfg, double fs,
                     bool training, nn::Rng& rng) {
  Tape tape;
  Tensor logits = tape.value(forward(tape, params, prepare_features(trial, fs, spectral_cfg), training, rng));
  logits.reshape({logits.size()});
  return logits;
}

}  // namespace bima::model
