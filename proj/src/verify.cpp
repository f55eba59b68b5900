#include "bima/verify.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "bima/adam.hpp"
#include "bima/grad_check.hpp"
#include "bima/kernels.hpp"
#include "bima/metrics.hpp"
#include "bima/model.hpp"
#include "bima/spectral.hpp"
#include "bima/tape.hpp"

namespace bima::verify {
namespace {

using nn::Tensor;

Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

std::string fmt(const char* label, double value, const char* op, double bound) {
  std::ostringstream out;
  out.precision(3);
  out << label << ' ' << std::scientific << value << ' ' << op << ' ' << bound;
  return out.str();
}

Check gradient_check() {
  std::mt19937_64 rng(11);
  model::BimaConfig cfg;
  cfg.num_channels = 3;
  cfg.num_classes = 3;
  cfg.wmf_kernels = 6;
  cfg.num_heads = 2;
  cfg.dropout_p = 0.0;
  const spectral::SpectralConfig sc{1.0, 8.0, 20.0, spectral::AmplitudeScale::two_over_n};
  const double fs = 128.0;
  std::vector<model::TrialFeatures> trials;
  for (int i = 0; i < 2; ++i) trials.push_back(model::prepare_features(random_tensor({3, 32}, rng), fs, sc));
  const std::vector<int> labels = {0, 2};
  model::ModelParams params = model::init_params(cfg, 32, trials[0].spectral.dim(1), 5);

  auto loss = [&](nn::ParamStore&, bool with_gradient) {
    double total = 0.0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      nn::Tape tape;
      nn::Rng unused(0);
      nn::Var logits = model::forward(tape, params, trials[i], false, unused);
      nn::Var l = nn::cross_entropy(tape, logits, std::span<const int>(&labels[i], 1));
      total += tape.value(l)[0];
      if (with_gradient) tape.backward(l);
    }
    return total;
  };
  const auto r = nn::grad_check(params.store, loss, 1e-5);
  return {"gradient_check", r.max_relative_error < 1e-4, fmt("max rel err", r.max_relative_error, "<", 1e-4)};
}

Check dft_oracle() {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 16 + 37 * static_cast<std::size_t>(trial);
    const Tensor x = random_tensor({n}, rng);
    const auto fast = spectral::dft(x.values(), n);
    double peak = 0.0, err = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> direct = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
        direct += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
      }
      peak = std::max(peak, std::abs(direct));
      err = std::max(err, std::abs(direct - fast[k]));
    }
    worst = std::max(worst, err / peak);
  }
  return {"dft_oracle", worst < 1e-9, fmt("max rel err", worst, "<", 1e-9)};
}

Check parseval() {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (std::size_t n : {64u, 250u, 1024u}) {
    const Tensor x = random_tensor({n}, rng);
    const auto spec = spectral::dft(x.values(), n);
    double time = 0.0, freq = 0.0;
    for (double v : x.values()) time += v * v;
    for (const auto& c : spec) freq += std::norm(c);
    worst = std::max(worst, std::fabs(time - freq / static_cast<double>(n)) / time);
  }
  return {"parseval", worst < 1e-9, fmt("max rel err", worst, "<", 1e-9)};
}

Check masking() {
  std::mt19937_64 rng(14);
  double worst_sum = 0.0, worst_masked = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t t = 2 + static_cast<std::size_t>(trial) * 3, dk = 4;
    const Tensor q = random_tensor({t, dk}, rng, 2.0), k = random_tensor({t, dk}, rng, 2.0);
    const Tensor v = random_tensor({t, dk}, rng);
    const auto res = model::masked_attention(q, k, v, true, -1e9);
    for (std::size_t r = 0; r < t; ++r) {
      std::vector<double> s(t);
      double mean = 0.0;
      for (std::size_t c = 0; c < t; ++c) {
        for (std::size_t p = 0; p < dk; ++p) s[c] += q.at(r, p) * k.at(c, p);
        s[c] /= 2.0;
        mean += s[c];
      }
      mean /= static_cast<double>(t);
      double sum = 0.0;
      for (std::size_t c = 0; c < t; ++c) {
        sum += res.weights.at(r, c);
        if (s[c] < mean) worst_masked = std::max(worst_masked, res.weights.at(r, c));
      }
      worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
    }
  }
  const bool ok = worst_sum < 1e-12 && worst_masked < 1e-6;
  return {"mask_properties", ok,
          fmt("row-sum err", worst_sum, "<", 1e-12) + ", " + fmt("masked weight", worst_masked, "<", 1e-6)};
}

Check uniform_rows() {
  const std::size_t t = 7;
  const Tensor q({t, 4}, 0.0), k({t, 4}, 1.0), v({t, 4}, 1.0);
  const auto res = model::masked_attention(q, k, v, true, -1e9);
  bool ok = true;
  for (double w : res.weights.values()) ok = ok && w == 1.0 / static_cast<double>(t);
  return {"uniform_rows", ok, ok ? "all weights exactly 1/T" : "non-uniform weights for an all-equal row"};
}

Check plain_attention() {
  std::mt19937_64 rng(15);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t t = 3 + static_cast<std::size_t>(trial) * 5, dk = 6;
    const Tensor q = random_tensor({t, dk}, rng), k = random_tensor({t, dk}, rng), v = random_tensor({t, dk}, rng);
    const auto res = model::masked_attention(q, k, v, false, -1e9);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t r = 0; r < t; ++r) {
      std::vector<double> w(t);
      double mx = -HUGE_VAL, total = 0.0;
      for (std::size_t c = 0; c < t; ++c) {
        for (std::size_t p = 0; p < dk; ++p) w[c] += q.at(r, p) * k.at(c, p) * scale;
        mx = std::max(mx, w[c]);
      }
      for (double& x : w) total += (x = std::exp(x - mx));
      for (std::size_t p = 0; p < dk; ++p) {
        double o = 0.0;
        for (std::size_t c = 0; c < t; ++c) o += w[c] / total * v.at(c, p);
        worst = std::max(worst, std::fabs(o - res.output.at(r, p)));
      }
    }
  }
  return {"plain_attention_oracle", worst < 1e-12, fmt("max abs err", worst, "<", 1e-12)};
}

Check softmax_normalization() {
  std::mt19937_64 rng(16);
  const Tensor x = random_tensor({20, 13}, rng, 3.0);
  const Tensor y = nn::softmax_rows(x);
  double worst = 0.0;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) sum += y.at(r, c);
    worst = std::max(worst, std::fabs(sum - 1.0));
  }
  return {"softmax_normalization", worst < 1e-12, fmt("row-sum err", worst, "<", 1e-12)};
}

Check adam_oracle() {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist;
  const train::AdamConfig cfg{1e-2, 0.9, 0.999, 1e-8};
  nn::ParamStore store;
  store.add("w", random_tensor({37}, rng));
  std::vector<double> theta(store.value(0).values().begin(), store.value(0).values().end());
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  auto state = train::AdamState::zeros_for(store);
  double worst = 0.0;
  for (std::size_t t = 1; t <= 200; ++t) {
    for (double& g : store.grad(0).values()) g = dist(rng);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = store.grad(0)[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mh = m[i] / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
      const double vh = v[i] / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
      theta[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps);
    }
    train::adam_step(store, state, t, cfg);
    for (std::size_t i = 0; i < theta.size(); ++i) worst = std::max(worst, std::fabs(theta[i] - store.value(0)[i]));
  }

  nn::ParamStore quad;
  quad.add("theta", Tensor({1}, 1.0));
  auto qs = train::AdamState::zeros_for(quad);
  for (std::size_t t = 1; t <= 100; ++t) {
    quad.grad(0)[0] = 2.0 * quad.value(0)[0];
    train::adam_step(quad, qs, t, {0.1, 0.9, 0.999, 1e-8});
  }
  const double final_theta = std::fabs(quad.value(0)[0]);
  const bool ok = worst < 1e-12 && final_theta < 0.05;
  return {"adam_oracle", ok, fmt("max abs err", worst, "<", 1e-12) + ", " + fmt("|theta_100|", final_theta, "<", 0.05)};
}

Check itr_properties() {
  const double perfect = eval::itr_bits_per_min(1.0, 12, 1.0);
  bool ok = std::fabs(perfect - 60.0 * std::log2(12.0)) <= 1e-9;
  for (std::size_t m : {2u, 5u, 12u}) {
    ok = ok && eval::itr_bits_per_min(1.0 / static_cast<double>(m), m, 1.0) == 0.0;
    double prev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      const double p = 1.0 / static_cast<double>(m) + (1.0 - 1.0 / static_cast<double>(m)) * i / 1000.0;
      const double itr = eval::itr_bits_per_min(p, m, 1.0);
      ok = ok && itr >= prev;
      prev = itr;
    }
  }
  const double table = eval::itr_bits_per_min(0.7866, 12, 0.75);
  ok = ok && std::fabs(table - 167.9) <= 0.1;
  std::ostringstream detail;
  detail.precision(6);
  detail << "itr(1,12,1s) " << perfect << ", itr(0.7866,12,0.75s) " << table;
  return {"itr_properties", ok, detail.str()};
}

Check kernel_equivalence() {
  const auto& simd = kernels::active();
  const auto& ref = kernels::table(kernels::Backend::scalar);
  if (simd.backend == kernels::Backend::scalar) return {"kernel_equivalence", true, "scalar backend active"};
  std::mt19937_64 rng(18);
  double worst = 0.0;
  auto compare = [&](const Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      worst = std::max(worst, std::fabs(a[i] - b[i]) / std::max(1.0, std::fabs(b[i])));
    }
  };
  const Tensor a = random_tensor({37, 29}, rng), b = random_tensor({29, 41}, rng);
  Tensor c1({37, 41}), c2({37, 41});
  simd.gemm(kernels::Trans::no, kernels::Trans::no, 37, 41, 29, a.data(), 29, b.data(), 41, c1.data(), 41, false);
  ref.gemm(kernels::Trans::no, kernels::Trans::no, 37, 41, 29, a.data(), 29, b.data(), 41, c2.data(), 41, false);
  compare(c1, c2);

  const std::size_t t = 53, dk = 8;
  const Tensor q = random_tensor({t, dk}, rng), k = random_tensor({t, dk}, rng), v = random_tensor({t, dk}, rng);
  const Tensor g = random_tensor({t, dk}, rng);
  Tensor w1({t, t}), w2({t, t}), o1({t, dk}), o2({t, dk});
  simd.attention_forward(t, dk, q.data(), dk, k.data(), dk, v.data(), dk, 0.35, true, -1e9, w1.data(), o1.data(), dk);
  ref.attention_forward(t, dk, q.data(), dk, k.data(), dk, v.data(), dk, 0.35, true, -1e9, w2.data(), o2.data(), dk);
  compare(w1, w2);
  compare(o1, o2);
  Tensor dq1({t, dk}), dk1({t, dk}), dv1({t, dk}), dq2({t, dk}), dk2({t, dk}), dv2({t, dk});
  simd.attention_backward(t, dk, q.data(), dk, k.data(), dk, v.data(), dk, 0.35, w2.data(), g.data(), dk, dq1.data(),
                          dk1.data(), dv1.data(), dk);
  ref.attention_backward(t, dk, q.data(), dk, k.data(), dk, v.data(), dk, 0.35, w2.data(), g.data(), dk, dq2.data(),
                         dk2.data(), dv2.data(), dk);
  compare(dq1, dq2);
  compare(dk1, dk2);
  compare(dv1, dv2);
  return {"kernel_equivalence", worst < 1e-12,
          std::string(simd.name) + " vs scalar, " + fmt("max rel err", worst, "<", 1e-12)};
}

}  // namespace

std::vector<Check> run_suite() {
  const std::vector<std::pair<const char*, std::function<Check()>>> checks = {
      {"gradient_check", gradient_check},
      {"dft_oracle", dft_oracle},
      {"parseval", parseval},
      {"mask_properties", masking},
      {"uniform_rows", uniform_rows},
      {"plain_attention_oracle", plain_attention},
      {"softmax_normalization", softmax_normalization},
      {"adam_oracle", adam_oracle},
      {"itr_properties", itr_properties},
      {"kernel_equivalence", kernel_equivalence},
  };
  std::vector<Check> results;
  for (const auto& [name, run] : checks) {
    try {
      results.push_back(run());
    } catch (const std::exception& e) {
      results.push_back({name, false, std::string("threw: ") + e.what()});
    }
  }
  return results;
}

bool all_passed(const std::vector<Check>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

}  // namespace bima::verify
