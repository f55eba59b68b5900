#include "bima/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "bima/error.hpp"

namespace bima::eval {
namespace {

void check_itr_domain(std::size_t m, double window_s, double gaze_s) {
  if (m < 2) throw ParameterError("itr: need at least 2 classes, got " + std::to_string(m));
  if (!(window_s > 0.0) || !std::isfinite(window_s)) throw ParameterError("itr: window must be positive");
  if (!(gaze_s >= 0.0) || !std::isfinite(gaze_s)) throw ParameterError("itr: gaze time must be non-negative");
}

std::vector<double> log_softmax(const nn::Tensor& logits) {
  const auto v = logits.values();
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += std::exp(x - mx);
  const double log_total = mx + std::log(total);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - log_total;
  return out;
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw ParameterError("accuracy: no predictions");
  if (predictions.size() != labels.size()) {
    throw ShapeError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

bool itr_clamped(double p, std::size_t m) { return m >= 2 && p < 1.0 / static_cast<double>(m); }

double bits_per_selection(double p, std::size_t m) {
  if (m < 2) throw ParameterError("itr: need at least 2 classes, got " + std::to_string(m));
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("itr: accuracy must lie in [0, 1]");
  const double md = static_cast<double>(m);
  p = std::max(p, 1.0 / md);
  if (p == 1.0 / md) return 0.0;  // chance level carries no information
  double bits = std::log2(md);
  if (p > 0.0) bits += p * std::log2(p);
  if (p < 1.0) bits += (1.0 - p) * std::log2((1.0 - p) / (md - 1.0));
  return std::max(bits, 0.0);
}

double itr_bits_per_min(double p, std::size_t m, double window_s, double gaze_s) {
  check_itr_domain(m, window_s, gaze_s);
  return bits_per_selection(p, m) * 60.0 / (window_s + gaze_s);
}

TTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("paired_t_test: samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw ParameterError("paired_t_test: need at least 2 pairs");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTest r;
  r.df = n - 1;
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    r.degenerate = true;
    r.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

int decision_fusion(const nn::Tensor& logits_na, const nn::Tensor& logits_sa) {
  if (logits_na.size() != logits_sa.size() || logits_na.empty()) {
    throw ShapeError("decision_fusion: logits of length " + std::to_string(logits_na.size()) + " and " +
                     std::to_string(logits_sa.size()));
  }
  const auto na = log_softmax(logits_na), sa = log_softmax(logits_sa);
  int best = 0;
  for (std::size_t k = 1; k < na.size(); ++k) {
    if (na[k] + sa[k] > na[best] + sa[best]) best = static_cast<int>(k);
  }
  return best;
}

}  // namespace bima::eval
