#include "bima/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace bima::kernels {
namespace {

void gemm_scalar(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                 bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = 0.0;
    }
  }
  auto a_at = [&](std::size_t i, std::size_t p) {
    return ta == Trans::no ? a[i * lda + p] : a[p * lda + i];
  };
  if (tb == Trans::no) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a_at(i, p);
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * ldb;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_at(i, p) * brow[p];
      c[i * ldc + j] += acc;
    }
  }
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adam_scalar(std::size_t n, double* theta, const double* grad, double* m, double* v,
                 const AdamCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    theta[i] = theta[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

void attention_forward_scalar(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                              const double* k, std::size_t ldk, const double* v, std::size_t ldv, double scale,
                              bool mask_enabled, double penalty, double* weights, double* out, std::size_t ldo) {
  for (std::size_t r = 0; r < t; ++r) {
    double* row = weights + r * t;
    double mean = 0.0;
    for (std::size_t c = 0; c < t; ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < dk; ++p) s += q[r * ldq + p] * k[c * ldk + p];
      row[c] = s * scale;
      mean += row[c];
    }
    mean /= static_cast<double>(t);
    double mx = -HUGE_VAL;
    for (std::size_t c = 0; c < t; ++c) {
      if (mask_enabled && row[c] < mean) row[c] += penalty;
      mx = std::max(mx, row[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < t; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < t; ++c) row[c] /= sum;
    for (std::size_t p = 0; p < dk; ++p) {
      double acc = 0.0;
      for (std::size_t c = 0; c < t; ++c) acc += row[c] * v[c * ldv + p];
      out[r * ldo + p] = acc;
    }
  }
}

void attention_backward_scalar(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                               const double* k, std::size_t ldk, const double* v, std::size_t ldv, double scale,
                               const double* weights, const double* dout, std::size_t lddo, double* dq,
                               double* dkey, double* dv, std::size_t ldg) {
  std::vector<double> ds(t);
  for (std::size_t r = 0; r < t; ++r) {
    const double* w = weights + r * t;
    const double* g = dout + r * lddo;
    double inner = 0.0;
    for (std::size_t c = 0; c < t; ++c) {
      double dw = 0.0;
      for (std::size_t p = 0; p < dk; ++p) dw += g[p] * v[c * ldv + p];
      ds[c] = dw;
      inner += w[c] * dw;
    }
    for (std::size_t c = 0; c < t; ++c) {
      ds[c] = w[c] * (ds[c] - inner) * scale;
      for (std::size_t p = 0; p < dk; ++p) {
        dq[r * ldg + p] += ds[c] * k[c * ldk + p];
        dkey[c * ldg + p] += ds[c] * q[r * ldq + p];
        dv[c * ldg + p] += w[c] * g[p];
      }
    }
  }
}

}  // namespace

namespace detail {
const KernelTable scalar_table{Backend::scalar,           "scalar",    gemm_scalar,
                               dot_scalar,                axpy_scalar, adam_scalar,
                               attention_forward_scalar, attention_backward_scalar};
}

}  // namespace bima::kernels
