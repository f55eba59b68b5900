#pragma once

// Stateless forward (and matching backward) math for the network primitives.
// The tape in tape.hpp wires these into a differentiable graph.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bima/tensor.hpp"

namespace bima::nn {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// y = x W + b for x [*, in], W [in, out], b [out] (b may be empty for no bias).
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

struct LayerNormCache {
  Tensor normalized;
  std::vector<double> inv_std;
};

// Per last-axis slice: (x - mean) / sqrt(var + eps) * gamma + beta, biased var.
Tensor layer_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5,
                          LayerNormCache* cache = nullptr);

// Writes dx; accumulates into dgamma / dbeta when non-null.
void layer_norm_backward(const Tensor& dy, const Tensor& gamma, const LayerNormCache& cache, Tensor& dx,
                         Tensor* dgamma, Tensor* dbeta);

double gelu(double x);
double gelu_derivative(double x);
Tensor gelu_forward(const Tensor& x);

Tensor softmax_rows(const Tensor& x);

// Test hook: when enabled, every softmax row is deliberately mis-normalized.
void set_softmax_fault(bool enabled);

// Inverted dropout. When mask is non-null it receives the per-element
// multiplier (0 or 1/(1-p)); with training off or p == 0 it is left empty.
Tensor dropout_forward(const Tensor& x, double p, bool training, Rng& rng,
                       std::vector<double>* mask = nullptr);

struct CrossEntropy {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits, same shape as logits
};

// Mean over the batch of -log softmax(logits)[label].
CrossEntropy cross_entropy(const Tensor& logits, std::span<const int> labels);

// One attention head over strided row-major operands (row stride = ld*).
// scores = q k^T * scale; when mask_enabled, entries strictly below their row
// mean get `penalty` added; weights = softmax(scores + mask) is written to
// `weights` (t x t) and weights * v to `out`.
void attention_head_forward(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                            const double* k, std::size_t ldk, const double* v, std::size_t ldv,
                            double scale, bool mask_enabled, double penalty, double* weights,
                            double* out, std::size_t ldo);

// Gradient of one head with the mask held constant. Accumulates into dq/dk/dv.
void attention_head_backward(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                             const double* k, std::size_t ldk, const double* v, std::size_t ldv,
                             double scale, const double* weights, const double* dout, std::size_t lddo,
                             double* dq, double* dk_out, double* dv, std::size_t ldg);

}  // namespace bima::nn
