#pragma once

// Straightforward reference implementations the optimized library code is
// checked against. Nothing here calls into the library's math.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "bima/tensor.hpp"

namespace oracle {

inline bima::nn::Tensor random_tensor(bima::nn::Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  bima::nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

// a [m x k] * b [k x n], triple loop.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

// O(n^2) DFT of x zero-padded to nfft.
inline std::vector<std::complex<double>> direct_dft(const std::vector<double>& x, std::size_t nfft) {
  std::vector<std::complex<double>> out(nfft);
  for (std::size_t k = 0; k < nfft; ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t t = 0; t < x.size(); ++t) {
      const long double angle =
          -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * t) % nfft) / nfft;
      re += x[t] * std::cos(angle);
      im += x[t] * std::sin(angle);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

struct Attention {
  std::vector<double> weights;  // t x t
  std::vector<double> output;   // t x dv
};

// softmax(q k^T / sqrt(dk) + mask) v with row-major q, k [t x dk], v [t x dv].
inline Attention attention(const std::vector<double>& q, const std::vector<double>& k, const std::vector<double>& v,
                           std::size_t t, std::size_t dk, std::size_t dv, bool mask, double penalty = -1e9) {
  Attention r{std::vector<double>(t * t), std::vector<double>(t * dv, 0.0)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t i = 0; i < t; ++i) {
    std::vector<double> s(t, 0.0);
    double mean = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      for (std::size_t p = 0; p < dk; ++p) s[j] += q[i * dk + p] * k[j * dk + p];
      s[j] *= scale;
      mean += s[j] / static_cast<double>(t);
    }
    if (mask) {
      for (double& x : s) {
        if (x < mean) x += penalty;
      }
    }
    double mx = s[0];
    for (double x : s) mx = std::max(mx, x);
    double total = 0.0;
    for (double& x : s) total += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < t; ++j) {
      r.weights[i * t + j] = s[j] / total;
      for (std::size_t p = 0; p < dv; ++p) r.output[i * dv + p] += r.weights[i * t + j] * v[j * dv + p];
    }
  }
  return r;
}

// Textbook Adam over a flat parameter vector.
struct Adam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  std::size_t t = 0;

  Adam(std::size_t n, double lr_, double b1_ = 0.9, double b2_ = 0.999, double eps_ = 1e-8)
      : lr(lr_), b1(b1_), b2(b2_), eps(eps_), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      theta[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

// Wolpaw bits/min evaluated in long double straight from the definition.
inline double itr(long double p, int m, long double seconds) {
  long double bits = std::log2(static_cast<long double>(m));
  if (p > 0) bits += p * std::log2(p);
  if (p < 1) bits += (1 - p) * std::log2((1 - p) / (m - 1));
  return static_cast<double>(bits * 60.0L / seconds);
}

}  // namespace oracle
