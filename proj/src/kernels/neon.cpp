// AArch64 always has Advanced SIMD, so this table is unconditionally usable on
// that architecture.

#include <arm_neon.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bima/kernels.hpp"

namespace bima::kernels {
namespace {

template <bool TransA>
inline double a_at(const double* a, std::size_t lda, std::size_t i, std::size_t p) {
  if constexpr (TransA) {
    return a[p * lda + i];
  } else {
    return a[i * lda + p];
  }
}

// MR rows by 2*NV columns register tile.
template <bool TransA, int MR, int NV>
inline void tile(std::size_t k, const double* a, std::size_t lda, std::size_t i0, const double* b,
                 std::size_t ldb, std::size_t j0, double* c, std::size_t ldc, bool accumulate) {
  float64x2_t acc[MR][NV];
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) {
      acc[r][v] = accumulate ? vld1q_f64(c + (i0 + r) * ldc + j0 + 2 * v) : vdupq_n_f64(0.0);
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb + j0;
    float64x2_t bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = vld1q_f64(brow + 2 * v);
    for (int r = 0; r < MR; ++r) {
      const float64x2_t av = vdupq_n_f64(a_at<TransA>(a, lda, i0 + r, p));
      for (int v = 0; v < NV; ++v) acc[r][v] = vfmaq_f64(acc[r][v], av, bv[v]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) vst1q_f64(c + (i0 + r) * ldc + j0 + 2 * v, acc[r][v]);
  }
}

template <bool TransA, int NV>
inline void column_block(std::size_t m, std::size_t k, const double* a, std::size_t lda,
                         const double* b, std::size_t ldb, std::size_t j0, double* c,
                         std::size_t ldc, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) tile<TransA, 4, NV>(k, a, lda, i, b, ldb, j0, c, ldc, accumulate);
  for (; i < m; ++i) tile<TransA, 1, NV>(k, a, lda, i, b, ldb, j0, c, ldc, accumulate);
}

template <bool TransA>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) column_block<TransA, 4>(m, k, a, lda, b, ldb, j, c, ldc, accumulate);
  for (; j + 2 <= n; j += 2) column_block<TransA, 1>(m, k, a, lda, b, ldb, j, c, ldc, accumulate);
  for (; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = accumulate ? c[i * ldc + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_at<TransA>(a, lda, i, p) * b[p * ldb + j];
      c[i * ldc + j] = acc;
    }
  }
}

double dot_neon(std::size_t n, const double* x, const double* y) {
  float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(x + i), vld1q_f64(y + i));
    s1 = vfmaq_f64(s1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double r = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

void gemm_neon(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
               bool accumulate) {
  if (m == 0 || n == 0) return;
  if (tb == Trans::yes) {
    if (ta == Trans::no && k >= 16) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double r = dot_neon(k, a + i * lda, b + j * ldb);
          c[i * ldc + j] = accumulate ? c[i * ldc + j] + r : r;
        }
      }
      return;
    }
    thread_local std::vector<double> packed;
    packed.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = b[j * ldb + p];
    }
    b = packed.data();
    ldb = n;
  }
  if (ta == Trans::no) {
    gemm_nn<false>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    gemm_nn<true>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

void axpy_neon(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void adam_neon(std::size_t n, double* theta, const double* grad, double* m, double* v,
               const AdamCoeffs& c) {
  const float64x2_t b1 = vdupq_n_f64(c.beta1);
  const float64x2_t b2 = vdupq_n_f64(c.beta2);
  const float64x2_t omb1 = vdupq_n_f64(1.0 - c.beta1);
  const float64x2_t omb2 = vdupq_n_f64(1.0 - c.beta2);
  const float64x2_t bc1 = vdupq_n_f64(c.bias_correction1);
  const float64x2_t bc2 = vdupq_n_f64(c.bias_correction2);
  const float64x2_t lr = vdupq_n_f64(c.learning_rate);
  const float64x2_t eps = vdupq_n_f64(c.eps);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t mv = vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(omb1, g));
    const float64x2_t vv = vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)), vmulq_f64(omb2, vmulq_f64(g, g)));
    vst1q_f64(m + i, mv);
    vst1q_f64(v + i, vv);
    const float64x2_t m_hat = vdivq_f64(mv, bc1);
    const float64x2_t v_hat = vdivq_f64(vv, bc2);
    const float64x2_t step = vdivq_f64(vmulq_f64(lr, m_hat), vaddq_f64(vsqrtq_f64(v_hat), eps));
    vst1q_f64(theta + i, vsubq_f64(vld1q_f64(theta + i), step));
  }
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    theta[i] = theta[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

// exp(x) for x <= 709: Cody-Waite reduction to |r| <= ln2/2 and a degree-13
// Taylor polynomial. Lanes below -708 flush to +0.0.
inline float64x2_t exp_f64(float64x2_t x) {
  const float64x2_t floor_v = vdupq_n_f64(-708.0);
  const uint64x2_t underflow = vcltq_f64(x, floor_v);
  x = vmaxq_f64(x, floor_v);
  const float64x2_t n = vrndnq_f64(vmulq_f64(x, vdupq_n_f64(1.4426950408889634)));
  float64x2_t r = vfmsq_f64(x, n, vdupq_n_f64(6.93147180369123816490e-01));
  r = vfmsq_f64(r, n, vdupq_n_f64(1.90821492927058770002e-10));
  static constexpr double kInvFactorial[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                             1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                             1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                             1.0 / 24.0,         1.0 / 6.0,         0.5,
                                             1.0,                1.0};
  float64x2_t poly = vdupq_n_f64(kInvFactorial[0]);
  for (int i = 1; i < 14; ++i) poly = vfmaq_f64(vdupq_n_f64(kInvFactorial[i]), poly, r);
  const int64x2_t bits = vshlq_n_s64(vaddq_s64(vcvtq_s64_f64(n), vdupq_n_s64(1023)), 52);
  const float64x2_t result = vmulq_f64(poly, vreinterpretq_f64_s64(bits));
  return vreinterpretq_f64_u64(vbicq_u64(vreinterpretq_u64_f64(result), underflow));
}

struct AttentionScratch {
  std::vector<double> kt, vt, dkt, dvt, ds;
};

AttentionScratch& attention_scratch() {
  thread_local AttentionScratch scratch;
  return scratch;
}

void transpose_into(std::size_t t, std::size_t dk, const double* src, std::size_t ld, double* dst) {
  for (std::size_t c = 0; c < t; ++c) {
    for (std::size_t p = 0; p < dk; ++p) dst[p * t + c] = src[c * ld + p];
  }
}

void attention_forward_neon(std::size_t t, std::size_t dk, const double* q, std::size_t ldq, const double* k,
                            std::size_t ldk, const double* v, std::size_t ldv, double scale, bool mask_enabled,
                            double penalty, double* weights, double* out, std::size_t ldo) {
  AttentionScratch& s = attention_scratch();
  s.kt.resize(dk * t);
  s.vt.resize(dk * t);
  transpose_into(t, dk, k, ldk, s.kt.data());
  transpose_into(t, dk, v, ldv, s.vt.data());
  const std::size_t t2 = t & ~std::size_t{1};
  const float64x2_t scale_v = vdupq_n_f64(scale);

  for (std::size_t r = 0; r < t; ++r) {
    double* row = weights + r * t;
    const double* qr = q + r * ldq;
    float64x2_t sum_v = vdupq_n_f64(0.0);
    for (std::size_t c = 0; c < t2; c += 2) {
      float64x2_t acc = vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < dk; ++p) acc = vfmaq_n_f64(acc, vld1q_f64(s.kt.data() + p * t + c), qr[p]);
      acc = vmulq_f64(acc, scale_v);
      vst1q_f64(row + c, acc);
      sum_v = vaddq_f64(sum_v, acc);
    }
    double sum = vaddvq_f64(sum_v);
    for (std::size_t c = t2; c < t; ++c) {
      double acc = 0.0;
      for (std::size_t p = 0; p < dk; ++p) acc += qr[p] * s.kt[p * t + c];
      row[c] = acc * scale;
      sum += row[c];
    }

    const double mean = sum / static_cast<double>(t);
    const float64x2_t mean_v = vdupq_n_f64(mean);
    const uint64x2_t penalty_bits = vreinterpretq_u64_f64(vdupq_n_f64(mask_enabled ? penalty : 0.0));
    float64x2_t max_v = vdupq_n_f64(-HUGE_VAL);
    for (std::size_t c = 0; c < t2; c += 2) {
      float64x2_t x = vld1q_f64(row + c);
      const uint64x2_t below = vcltq_f64(x, mean_v);
      x = vaddq_f64(x, vreinterpretq_f64_u64(vandq_u64(below, penalty_bits)));
      vst1q_f64(row + c, x);
      max_v = vmaxq_f64(max_v, x);
    }
    double mx = vmaxvq_f64(max_v);
    for (std::size_t c = t2; c < t; ++c) {
      if (mask_enabled && row[c] < mean) row[c] += penalty;
      mx = std::max(mx, row[c]);
    }

    const float64x2_t mx_v = vdupq_n_f64(mx);
    float64x2_t total_v = vdupq_n_f64(0.0);
    for (std::size_t c = 0; c < t2; c += 2) {
      const float64x2_t e = exp_f64(vsubq_f64(vld1q_f64(row + c), mx_v));
      vst1q_f64(row + c, e);
      total_v = vaddq_f64(total_v, e);
    }
    double total = vaddvq_f64(total_v);
    for (std::size_t c = t2; c < t; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < t2; c += 2) vst1q_f64(row + c, vmulq_n_f64(vld1q_f64(row + c), inv));
    for (std::size_t c = t2; c < t; ++c) row[c] *= inv;

    for (std::size_t p = 0; p < dk; ++p) out[r * ldo + p] = dot_neon(t, row, s.vt.data() + p * t);
  }
}

void attention_backward_neon(std::size_t t, std::size_t dk, const double* q, std::size_t ldq, const double* k,
                             std::size_t ldk, const double* v, std::size_t ldv, double scale, const double* weights,
                             const double* dout, std::size_t lddo, double* dq, double* dkey, double* dv,
                             std::size_t ldg) {
  AttentionScratch& s = attention_scratch();
  s.kt.resize(dk * t);
  s.vt.resize(dk * t);
  s.ds.resize(t);
  s.dkt.assign(dk * t, 0.0);
  s.dvt.assign(dk * t, 0.0);
  transpose_into(t, dk, k, ldk, s.kt.data());
  transpose_into(t, dk, v, ldv, s.vt.data());
  const std::size_t t2 = t & ~std::size_t{1};
  double* ds = s.ds.data();

  for (std::size_t r = 0; r < t; ++r) {
    const double* w = weights + r * t;
    const double* g = dout + r * lddo;
    const double* qr = q + r * ldq;

    float64x2_t inner_v = vdupq_n_f64(0.0);
    for (std::size_t c = 0; c < t2; c += 2) {
      float64x2_t acc = vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < dk; ++p) acc = vfmaq_n_f64(acc, vld1q_f64(s.vt.data() + p * t + c), g[p]);
      vst1q_f64(ds + c, acc);
      inner_v = vfmaq_f64(inner_v, vld1q_f64(w + c), acc);
    }
    double inner = vaddvq_f64(inner_v);
    for (std::size_t c = t2; c < t; ++c) {
      double acc = 0.0;
      for (std::size_t p = 0; p < dk; ++p) acc += g[p] * s.vt[p * t + c];
      ds[c] = acc;
      inner += w[c] * acc;
    }
    const float64x2_t inner_b = vdupq_n_f64(inner);
    for (std::size_t c = 0; c < t2; c += 2) {
      const float64x2_t d = vsubq_f64(vld1q_f64(ds + c), inner_b);
      vst1q_f64(ds + c, vmulq_n_f64(vmulq_f64(vld1q_f64(w + c), d), scale));
    }
    for (std::size_t c = t2; c < t; ++c) ds[c] = w[c] * (ds[c] - inner) * scale;

    for (std::size_t p = 0; p < dk; ++p) {
      const double* ktp = s.kt.data() + p * t;
      double* dktp = s.dkt.data() + p * t;
      double* dvtp = s.dvt.data() + p * t;
      float64x2_t dq_v = vdupq_n_f64(0.0);
      for (std::size_t c = 0; c < t2; c += 2) {
        const float64x2_t dsv = vld1q_f64(ds + c);
        dq_v = vfmaq_f64(dq_v, dsv, vld1q_f64(ktp + c));
        vst1q_f64(dktp + c, vfmaq_n_f64(vld1q_f64(dktp + c), dsv, qr[p]));
        vst1q_f64(dvtp + c, vfmaq_n_f64(vld1q_f64(dvtp + c), vld1q_f64(w + c), g[p]));
      }
      double dq_p = vaddvq_f64(dq_v);
      for (std::size_t c = t2; c < t; ++c) {
        dq_p += ds[c] * ktp[c];
        dktp[c] += ds[c] * qr[p];
        dvtp[c] += w[c] * g[p];
      }
      dq[r * ldg + p] += dq_p;
    }
  }
  for (std::size_t c = 0; c < t; ++c) {
    for (std::size_t p = 0; p < dk; ++p) {
      dkey[c * ldg + p] += s.dkt[p * t + c];
      dv[c * ldg + p] += s.dvt[p * t + c];
    }
  }
}

}  // namespace

namespace detail {
const KernelTable neon_table{Backend::neon,           "neon",    gemm_neon,
                             dot_neon,                axpy_neon, adam_neon,
                             attention_forward_neon, attention_backward_neon};
}

}  // namespace bima::kernels
