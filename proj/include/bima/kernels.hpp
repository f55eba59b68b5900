#pragma once

// Data-parallel inner loops used by the numeric core. Each backend provides
// the same table of entry points; a scalar reference is always present and a
// SIMD variant (AVX2+FMA on x86-64, NEON on AArch64) is selected at runtime
// when the CPU supports it. Set BIMA_KERNELS=scalar to force the reference.

#include <cstddef>
#include <string_view>

namespace bima::kernels {

enum class Backend { scalar, avx2, neon };

enum class Trans { no, yes };

struct AdamCoeffs {
  double learning_rate;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

// C (m x n) = op(A) * op(B), or C += op(A) * op(B) when accumulate is set.
// op(A) is m x k, op(B) is k x n; leading dimensions refer to the stored
// (untransposed) row-major layout.
using GemmFn = void (*)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                        const double* a, std::size_t lda, const double* b, std::size_t ldb,
                        double* c, std::size_t ldc, bool accumulate);
using DotFn = double (*)(std::size_t n, const double* x, const double* y);
using AxpyFn = void (*)(std::size_t n, double alpha, const double* x, double* y);
using AdamFn = void (*)(std::size_t n, double* theta, const double* grad, double* m, double* v,
                        const AdamCoeffs& coeffs);

// One attention head over t tokens with width dk (values share the width).
// Forward writes the t x t weights softmax(q k^T * scale + mask) and
// out = weights * v; with mask_enabled, scores strictly below their row mean
// receive `penalty`. Backward treats the mask as constant and accumulates
// into dq, dkey and dv (all with leading dimension ldg).
using AttentionForwardFn = void (*)(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                                    const double* k, std::size_t ldk, const double* v, std::size_t ldv,
                                    double scale, bool mask_enabled, double penalty, double* weights,
                                    double* out, std::size_t ldo);
using AttentionBackwardFn = void (*)(std::size_t t, std::size_t dk, const double* q, std::size_t ldq,
                                     const double* k, std::size_t ldk, const double* v, std::size_t ldv,
                                     double scale, const double* weights, const double* dout,
                                     std::size_t lddo, double* dq, double* dkey, double* dv, std::size_t ldg);

struct KernelTable {
  Backend backend;
  std::string_view name;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
  AdamFn adam_update;
  AttentionForwardFn attention_forward;
  AttentionBackwardFn attention_backward;
};

bool backend_supported(Backend backend);

// Table for a specific backend; throws ParameterError if unsupported here.
const KernelTable& table(Backend backend);

// Currently selected table. Selection happens once on first use.
const KernelTable& active();

void set_backend(Backend backend);

Backend parse_backend(std::string_view name);

inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                 bool accumulate) {
  active().gemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

inline double dot(std::size_t n, const double* x, const double* y) { return active().dot(n, x, y); }

inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  active().axpy(n, alpha, x, y);
}

inline void adam_update(std::size_t n, double* theta, const double* grad, double* m, double* v,
                        const AdamCoeffs& coeffs) {
  active().adam_update(n, theta, grad, m, v, coeffs);
}

inline void attention_forward(std::size_t t, std::size_t dk, const double* q, std::size_t ldq, const double* k,
                              std::size_t ldk, const double* v, std::size_t ldv, double scale, bool mask_enabled,
                              double penalty, double* weights, double* out, std::size_t ldo) {
  active().attention_forward(t, dk, q, ldq, k, ldk, v, ldv, scale, mask_enabled, penalty, weights, out, ldo);
}

inline void attention_backward(std::size_t t, std::size_t dk, const double* q, std::size_t ldq, const double* k,
                               std::size_t ldk, const double* v, std::size_t ldv, double scale,
                               const double* weights, const double* dout, std::size_t lddo, double* dq,
                               double* dkey, double* dv, std::size_t ldg) {
  active().attention_backward(t, dk, q, ldq, k, ldk, v, ldv, scale, weights, dout, lddo, dq, dkey, dv, ldg);
}

namespace detail {
extern const KernelTable scalar_table;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable avx2_table;
#endif
#if defined(__aarch64__)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace bima::kernels
