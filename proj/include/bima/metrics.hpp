#pragma once

#include <cstddef>
#include <span>

#include "bima/tensor.hpp"

namespace bima::eval {

// Fraction of positions where predictions and labels agree.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Wolpaw information transfer rate in bits/min. P is clamped to [1/M, 1]
// first; the selection time is window_s + gaze_s.
double itr_bits_per_min(double p, std::size_t m, double window_s, double gaze_s = 0.0);

// True when itr_bits_per_min would clamp P up to chance.
bool itr_clamped(double p, std::size_t m);

// Bits per selection, B = log2 M + P log2 P + (1-P) log2((1-P)/(M-1)).
double bits_per_selection(double p, std::size_t m);

struct TTest {
  double t = 0.0;
  double p = 1.0;  // two-sided
  std::size_t df = 0;
  bool degenerate = false;  // zero spread with nonzero mean: t is +/-inf, p = 0
};

// Paired Student t-test on a - b.
TTest paired_t_test(std::span<const double> a, std::span<const double> b);

// Argmax of log_softmax(na) + log_softmax(sa).
int decision_fusion(const nn::Tensor& logits_na, const nn::Tensor& logits_sa);

}  // namespace bima::eval
