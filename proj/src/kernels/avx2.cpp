// Compiled with -mavx2 -mfma; only reached through the dispatcher after a
// cpuid check, so nothing here may run at static-initialization time.

#include <immintrin.h>

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

// MR rows by 4*NV columns register tile.
template <bool TransA, int MR, int NV>
inline void tile(std::size_t k, const double* a, std::size_t lda, std::size_t i0, const double* b,
                 std::size_t ldb, std::size_t j0, double* c, std::size_t ldc, bool accumulate) {
  __m256d acc[MR][NV];
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) {
      acc[r][v] = accumulate ? _mm256_loadu_pd(c + (i0 + r) * ldc + j0 + 4 * v) : _mm256_setzero_pd();
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb + j0;
    __m256d bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = _mm256_loadu_pd(brow + 4 * v);
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_set1_pd(a_at<TransA>(a, lda, i0 + r, p));
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) _mm256_storeu_pd(c + (i0 + r) * ldc + j0 + 4 * v, acc[r][v]);
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
  for (; j + 8 <= n; j += 8) column_block<TransA, 2>(m, k, a, lda, b, ldb, j, c, ldc, accumulate);
  for (; j + 4 <= n; j += 4) column_block<TransA, 1>(m, k, a, lda, b, ldb, j, c, ldc, accumulate);
  for (; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = accumulate ? c[i * ldc + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_at<TransA>(a, lda, i, p) * b[p * ldb + j];
      c[i * ldc + j] = acc;
    }
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// C[i,j] (+)= <A row i, B row j>; both operands contiguous along k.
void gemm_nt_dots(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  const std::size_t kv = k & ~std::size_t{3};
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < kv; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r[4] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3)};
      for (std::size_t p = kv; p < k; ++p) {
        r[0] += arow[p] * b0[p];
        r[1] += arow[p] * b1[p];
        r[2] += arow[p] * b2[p];
        r[3] += arow[p] * b3[p];
      }
      double* crow = c + i * ldc + j;
      for (int q = 0; q < 4; ++q) crow[q] = accumulate ? crow[q] + r[q] : r[q];
    }
    for (; j < n; ++j) {
      const double* brow = b + j * ldb;
      __m256d s = _mm256_setzero_pd();
      for (std::size_t p = 0; p < kv; p += 4) {
        s = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), s);
      }
      double r = hsum(s);
      for (std::size_t p = kv; p < k; ++p) r += arow[p] * brow[p];
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + r : r;
    }
  }
}

void gemm_avx2(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
               bool accumulate) {
  if (m == 0 || n == 0) return;
  if (tb == Trans::yes) {
    if (ta == Trans::no && k >= 16) {
      gemm_nt_dots(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
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

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double r = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Same operation sequence as the scalar reference without fused multiply-add,
// so results are bit-identical to it.
void adam_avx2(std::size_t n, double* theta, const double* grad, double* m, double* v,
               const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.learning_rate);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d m_hat = _mm256_div_pd(mv, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(theta + i, _mm256_sub_pd(_mm256_loadu_pd(theta + i), step));
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
// Taylor polynomial (truncation error below 1e-17 relative). Lanes below
// -708 flush to +0.0, where the true result is subnormal or zero.
inline __m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d underflow = _mm256_cmp_pd(x, _mm256_set1_pd(-708.0), _CMP_LT_OQ);
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);
  // Estrin evaluation of sum_{i<=13} r^i / i! keeps the dependency chain short.
  const __m256d r2 = _mm256_mul_pd(r, r);
  const __m256d r4 = _mm256_mul_pd(r2, r2);
  const __m256d r8 = _mm256_mul_pd(r4, r4);
  auto pair = [&](double c0, double c1) { return _mm256_fmadd_pd(_mm256_set1_pd(c1), r, _mm256_set1_pd(c0)); };
  const __m256d p01 = pair(1.0, 1.0);
  const __m256d p23 = pair(1.0 / 2.0, 1.0 / 6.0);
  const __m256d p45 = pair(1.0 / 24.0, 1.0 / 120.0);
  const __m256d p67 = pair(1.0 / 720.0, 1.0 / 5040.0);
  const __m256d p89 = pair(1.0 / 40320.0, 1.0 / 362880.0);
  const __m256d p1011 = pair(1.0 / 3628800.0, 1.0 / 39916800.0);
  const __m256d p1213 = pair(1.0 / 479001600.0, 1.0 / 6227020800.0);
  const __m256d q0 = _mm256_fmadd_pd(p23, r2, p01);
  const __m256d q1 = _mm256_fmadd_pd(p67, r2, p45);
  const __m256d q2 = _mm256_fmadd_pd(p1011, r2, p89);
  const __m256d lo = _mm256_fmadd_pd(q1, r4, q0);
  const __m256d hi = _mm256_fmadd_pd(p1213, r4, q2);
  const __m256d poly = _mm256_fmadd_pd(hi, r8, lo);
  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_add_epi64(_mm256_cvtepi32_epi64(n32), _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  const __m256d result = _mm256_mul_pd(poly, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
}

// Per-thread scratch for the transposed operands; grows to the largest head seen.
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

// out[c] = sum_p a[p] * m[p * t + c] for c in [0, t). Sixteen columns at a
// time so four independent FMA chains hide the latency.
void row_times_rows(std::size_t dk, const double* a, const double* m, std::size_t t, double* out) {
  std::size_t c = 0;
  for (; c + 16 <= t; c += 16) {
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    for (std::size_t p = 0; p < dk; ++p) {
      const __m256d x = _mm256_set1_pd(a[p]);
      const double* row = m + p * t + c;
      a0 = _mm256_fmadd_pd(x, _mm256_loadu_pd(row), a0);
      a1 = _mm256_fmadd_pd(x, _mm256_loadu_pd(row + 4), a1);
      a2 = _mm256_fmadd_pd(x, _mm256_loadu_pd(row + 8), a2);
      a3 = _mm256_fmadd_pd(x, _mm256_loadu_pd(row + 12), a3);
    }
    _mm256_storeu_pd(out + c, a0);
    _mm256_storeu_pd(out + c + 4, a1);
    _mm256_storeu_pd(out + c + 8, a2);
    _mm256_storeu_pd(out + c + 12, a3);
  }
  for (; c + 4 <= t; c += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t p = 0; p < dk; ++p) acc = _mm256_fmadd_pd(_mm256_set1_pd(a[p]), _mm256_loadu_pd(m + p * t + c), acc);
    _mm256_storeu_pd(out + c, acc);
  }
  for (; c < t; ++c) {
    double acc = 0.0;
    for (std::size_t p = 0; p < dk; ++p) acc = std::fma(a[p], m[p * t + c], acc);
    out[c] = acc;
  }
}

void attention_forward_avx2(std::size_t t, std::size_t dk, const double* q, std::size_t ldq, const double* k,
                            std::size_t ldk, const double* v, std::size_t ldv, double scale, bool mask_enabled,
                            double penalty, double* weights, double* out, std::size_t ldo) {
  AttentionScratch& s = attention_scratch();
  s.kt.resize(dk * t);
  s.vt.resize(dk * t);
  transpose_into(t, dk, k, ldk, s.kt.data());
  transpose_into(t, dk, v, ldv, s.vt.data());
  const std::size_t t4 = t & ~std::size_t{3};
  const __m256d scale_v = _mm256_set1_pd(scale);

  for (std::size_t r = 0; r < t; ++r) {
    double* row = weights + r * t;
    const double* qr = q + r * ldq;
    row_times_rows(dk, qr, s.kt.data(), t, row);
    __m256d sum_v = _mm256_setzero_pd();
    for (std::size_t c = 0; c < t4; c += 4) {
      const __m256d x = _mm256_mul_pd(_mm256_loadu_pd(row + c), scale_v);
      _mm256_storeu_pd(row + c, x);
      sum_v = _mm256_add_pd(sum_v, x);
    }
    double sum = hsum(sum_v);
    for (std::size_t c = t4; c < t; ++c) {
      row[c] *= scale;
      sum += row[c];
    }

    const double mean = sum / static_cast<double>(t);
    const __m256d mean_v = _mm256_set1_pd(mean);
    const __m256d penalty_v = _mm256_set1_pd(mask_enabled ? penalty : 0.0);
    __m256d max_v = _mm256_set1_pd(-HUGE_VAL);
    for (std::size_t c = 0; c < t4; c += 4) {
      __m256d x = _mm256_loadu_pd(row + c);
      x = _mm256_add_pd(x, _mm256_and_pd(_mm256_cmp_pd(x, mean_v, _CMP_LT_OQ), penalty_v));
      _mm256_storeu_pd(row + c, x);
      max_v = _mm256_max_pd(max_v, x);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, max_v);
    double mx = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
    for (std::size_t c = t4; c < t; ++c) {
      if (mask_enabled && row[c] < mean) row[c] += penalty;
      mx = std::max(mx, row[c]);
    }

    const __m256d mx_v = _mm256_set1_pd(mx), flush_v = _mm256_set1_pd(-708.0);
    __m256d total_v = _mm256_setzero_pd();
    for (std::size_t c = 0; c < t4; c += 4) {
      const __m256d x = _mm256_sub_pd(_mm256_loadu_pd(row + c), mx_v);
      if (_mm256_movemask_pd(_mm256_cmp_pd(x, flush_v, _CMP_LT_OQ)) == 0xF) {
        _mm256_storeu_pd(row + c, _mm256_setzero_pd());
        continue;
      }
      const __m256d e = exp_pd(x);
      _mm256_storeu_pd(row + c, e);
      total_v = _mm256_add_pd(total_v, e);
    }
    double total = hsum(total_v);
    if (t4 < t) {
      alignas(32) double tail[4] = {-HUGE_VAL, -HUGE_VAL, -HUGE_VAL, -HUGE_VAL};
      for (std::size_t c = t4; c < t; ++c) tail[c - t4] = row[c] - mx;
      _mm256_store_pd(tail, exp_pd(_mm256_load_pd(tail)));
      for (std::size_t c = t4; c < t; ++c) {
        row[c] = tail[c - t4];
        total += row[c];
      }
    }
    const __m256d inv_v = _mm256_set1_pd(1.0 / total);
    for (std::size_t c = 0; c < t4; c += 4) _mm256_storeu_pd(row + c, _mm256_mul_pd(_mm256_loadu_pd(row + c), inv_v));
    for (std::size_t c = t4; c < t; ++c) row[c] *= 1.0 / total;

    for (std::size_t p = 0; p < dk; ++p) out[r * ldo + p] = dot_avx2(t, row, s.vt.data() + p * t);
  }
}

void attention_backward_avx2(std::size_t t, std::size_t dk, const double* q, std::size_t ldq, const double* k,
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
  const std::size_t t4 = t & ~std::size_t{3};
  double* ds = s.ds.data();

  for (std::size_t r = 0; r < t; ++r) {
    const double* w = weights + r * t;
    const double* g = dout + r * lddo;
    const double* qr = q + r * ldq;

    // ds <- d(loss)/d(weights) for this row, then the softmax Jacobian.
    row_times_rows(dk, g, s.vt.data(), t, ds);
    __m256d inner_v = _mm256_setzero_pd();
    for (std::size_t c = 0; c < t4; c += 4) {
      inner_v = _mm256_fmadd_pd(_mm256_loadu_pd(w + c), _mm256_loadu_pd(ds + c), inner_v);
    }
    double inner = hsum(inner_v);
    for (std::size_t c = t4; c < t; ++c) inner += w[c] * ds[c];
    const __m256d inner_b = _mm256_set1_pd(inner), scale_v = _mm256_set1_pd(scale);
    for (std::size_t c = 0; c < t4; c += 4) {
      const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(ds + c), inner_b);
      _mm256_storeu_pd(ds + c, _mm256_mul_pd(_mm256_mul_pd(_mm256_loadu_pd(w + c), d), scale_v));
    }
    for (std::size_t c = t4; c < t; ++c) ds[c] = w[c] * (ds[c] - inner) * scale;

    for (std::size_t p = 0; p < dk; ++p) {
      const double* ktp = s.kt.data() + p * t;
      double* dktp = s.dkt.data() + p * t;
      double* dvtp = s.dvt.data() + p * t;
      const __m256d qp = _mm256_set1_pd(qr[p]), gp = _mm256_set1_pd(g[p]);
      __m256d dq0 = _mm256_setzero_pd(), dq1 = _mm256_setzero_pd();
      std::size_t c = 0;
      for (; c + 8 <= t; c += 8) {
        const __m256d ds0 = _mm256_loadu_pd(ds + c), ds1 = _mm256_loadu_pd(ds + c + 4);
        dq0 = _mm256_fmadd_pd(ds0, _mm256_loadu_pd(ktp + c), dq0);
        dq1 = _mm256_fmadd_pd(ds1, _mm256_loadu_pd(ktp + c + 4), dq1);
        _mm256_storeu_pd(dktp + c, _mm256_fmadd_pd(ds0, qp, _mm256_loadu_pd(dktp + c)));
        _mm256_storeu_pd(dktp + c + 4, _mm256_fmadd_pd(ds1, qp, _mm256_loadu_pd(dktp + c + 4)));
        _mm256_storeu_pd(dvtp + c, _mm256_fmadd_pd(_mm256_loadu_pd(w + c), gp, _mm256_loadu_pd(dvtp + c)));
        _mm256_storeu_pd(dvtp + c + 4, _mm256_fmadd_pd(_mm256_loadu_pd(w + c + 4), gp, _mm256_loadu_pd(dvtp + c + 4)));
      }
      for (; c + 4 <= t; c += 4) {
        const __m256d dsv = _mm256_loadu_pd(ds + c);
        dq0 = _mm256_fmadd_pd(dsv, _mm256_loadu_pd(ktp + c), dq0);
        _mm256_storeu_pd(dktp + c, _mm256_fmadd_pd(dsv, qp, _mm256_loadu_pd(dktp + c)));
        _mm256_storeu_pd(dvtp + c, _mm256_fmadd_pd(_mm256_loadu_pd(w + c), gp, _mm256_loadu_pd(dvtp + c)));
      }
      double dq_p = hsum(_mm256_add_pd(dq0, dq1));
      for (; c < t; ++c) {
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
const KernelTable avx2_table{Backend::avx2,           "avx2",    gemm_avx2,
                             dot_avx2,                axpy_avx2, adam_avx2,
                             attention_forward_avx2, attention_backward_avx2};
}

}  // namespace bima::kernels
