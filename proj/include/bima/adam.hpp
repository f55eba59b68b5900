#pragma once

#include <cstddef>
#include <vector>

#include "bima/param_store.hpp"
#include "bima/tensor.hpp"

namespace bima::train {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void validate(const AdamConfig& cfg);

// First and second moment buffers, one pair per parameter.
struct AdamState {
  std::vector<nn::Tensor> m;
  std::vector<nn::Tensor> v;

  static AdamState zeros_for(const nn::ParamStore& params);
};

// One bias-corrected Adam update of every parameter from its gradient buffer.
// t is the 1-based step index.
void adam_step(nn::ParamStore& params, AdamState& state, std::size_t t, const AdamConfig& cfg);

}  // namespace bima::train
