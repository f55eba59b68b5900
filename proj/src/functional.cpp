#include "bima/functional.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "bima/error.hpp"
#include "bima/kernels.hpp"

namespace bima::nn {

using kernels::Trans;

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.rank() == 0 || x.cols() != w.dim(0)) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                     shape_to_string(w.shape()));
  }
  if (!b.empty() && (b.rank() != 1 || b.dim(0) != w.dim(1))) {
    throw ShapeError("linear: bias " + shape_to_string(b.shape()) + " incompatible with weight " +
                     shape_to_string(w.shape()));
  }
  const std::size_t rows = x.rows(), in = w.dim(0), out = w.dim(1);
  Shape shape = x.shape();
  shape.back() = out;
  Tensor y(shape);
  kernels::gemm(Trans::no, Trans::no, rows, out, in, x.data(), in, w.data(), out, y.data(), out, false);
  if (!b.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = y.data() + r * out;
      for (std::size_t j = 0; j < out; ++j) row[j] += b[j];
    }
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_to_string(a.shape()) + " by " + shape_to_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernels::gemm(Trans::no, Trans::no, a.dim(0), b.dim(1), a.dim(1), a.data(), a.dim(1), b.data(),
                b.dim(1), c.data(), b.dim(1), false);
  return c;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_to_string(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  }
  return y;
}

Tensor layer_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                          LayerNormCache* cache) {
  const std::size_t d = x.cols();
  if (d == 0 || gamma.size() != d || beta.size() != d) {
    throw ShapeError("layer_norm: input " + shape_to_string(x.shape()) + " with gamma " +
                     shape_to_string(gamma.shape()) + " and beta " + shape_to_string(beta.shape()));
  }
  const std::size_t rows = x.rows();
  Tensor y(x.shape());
  if (cache != nullptr) {
    cache->normalized = Tensor(x.shape());
    cache->inv_std.assign(rows, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* out = y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (in[j] - mean) * inv;
      out[j] = xhat * gamma[j] + beta[j];
      if (cache != nullptr) cache->normalized[r * d + j] = xhat;
    }
    if (cache != nullptr) cache->inv_std[r] = inv;
  }
  return y;
}

void layer_norm_backward(const Tensor& dy, const Tensor& gamma, const LayerNormCache& cache, Tensor& dx,
                         Tensor* dgamma, Tensor* dbeta) {
  const std::size_t d = dy.cols(), rows = dy.rows();
  if (dx.shape() != dy.shape()) dx = Tensor(dy.shape());
  std::vector<double> g(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* up = dy.data() + r * d;
    const double* xhat = cache.normalized.data() + r * d;
    double mean_g = 0.0, mean_gx = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      g[j] = up[j] * gamma[j];
      mean_g += g[j];
      mean_gx += g[j] * xhat[j];
    }
    mean_g /= static_cast<double>(d);
    mean_gx /= static_cast<double>(d);
    double* out = dx.data() + r * d;
    const double inv = cache.inv_std[r];
    for (std::size_t j = 0; j < d; ++j) out[j] = inv * (g[j] - mean_g - xhat[j] * mean_gx);
    if (dgamma != nullptr) {
      for (std::size_t j = 0; j < d; ++j) (*dgamma)[j] += up[j] * xhat[j];
    }
    if (dbeta != nullptr) {
      for (std::size_t j = 0; j < d; ++j) (*dbeta)[j] += up[j];
    }
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Tensor gelu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
  return y;
}

namespace {

// exp() of anything below this is exactly +0.0 in IEEE double.
constexpr double kExpUnderflow = -746.0;

std::atomic<bool> softmax_fault{false};

void softmax_row(double* row, std::size_t n) {
  const double mx = *std::max_element(row, row + n);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double z = row[j] - mx;
    row[j] = z < kExpUnderflow ? 0.0 : std::exp(z);
    sum += row[j];
  }
  const double inv = softmax_fault.load(std::memory_order_relaxed) ? 1.0 / (sum + 0.5) : 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

}  // namespace

void set_softmax_fault(bool enabled) { softmax_fault.store(enabled); }

Tensor softmax_rows(const Tensor& x) {
  if (x.cols() == 0) throw ShapeError("softmax_rows: empty rows in " + shape_to_string(x.shape()));
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) softmax_row(y.data() + r * y.cols(), y.cols());
  return y;
}

Tensor dropout_forward(const Tensor& x, double p, bool training, Rng& rng, std::vector<double>* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (mask != nullptr) mask->clear();
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor y(x.shape());
  if (mask != nullptr) mask->resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = uniform01(rng) < p ? 0.0 : keep_scale;
    y[i] = x[i] * m;
    if (mask != nullptr) (*mask)[i] = m;
  }
  return y;
}

CrossEntropy cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || logits.dim(1) == 0) {
    throw ShapeError("cross_entropy: logits " + shape_to_string(logits.shape()) + " with " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  CrossEntropy result;
  result.grad = softmax_rows(logits);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    // log-sum-exp form keeps the loss accurate when the true class dominates
    const double* row = logits.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(row[j] - mx);
    total += (mx + std::log(sum)) - row[label];
    result.grad[b * classes + static_cast<std::size_t>(label)] -= 1.0;
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  result.loss = total * inv_batch;
  for (auto& g : result.grad.values()) g *= inv_batch;
  return result;
}

void attention_head_forward(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                            const double* k, std::size_t ldk, const double* v, std::size_t ldv,
                            double scale, bool mask_enabled, double penalty, double* weights,
                            double* out, std::size_t ldo) {
  if (t == 0) return;
  kernels::attention_forward(t, dk, q, ldq, k, ldk, v, ldv, scale, mask_enabled, penalty, weights, out, ldo);
}

void attention_head_backward(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                             const double* k, std::size_t ldk, const double* v, std::size_t ldv,
                             double scale, const double* weights, const double* dout, std::size_t lddo,
                             double* dq, double* dk_out, double* dv, std::size_t ldg) {
  if (t == 0) return;
  kernels::attention_backward(t, dk, q, ldq, k, ldk, v, ldv, scale, weights, dout, lddo, dq, dk_out, dv, ldg);
}

}  // namespace bima::nn
