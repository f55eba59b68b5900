#include "bima/adam.hpp"

#include <cmath>
#include <string>

#include "bima/error.hpp"
#include "bima/kernels.hpp"

namespace bima::train {

void validate(const AdamConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ParameterError("adam: learning_rate must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) throw ParameterError("adam: beta1 must lie in [0, 1)");
  if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) throw ParameterError("adam: beta2 must lie in [0, 1)");
  if (!(cfg.eps > 0.0)) throw ParameterError("adam: eps must be positive");
}

AdamState AdamState::zeros_for(const nn::ParamStore& params) {
  AdamState state;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m.push_back(nn::Tensor::zeros_like(params.value(i)));
    state.v.push_back(nn::Tensor::zeros_like(params.value(i)));
  }
  return state;
}

void adam_step(nn::ParamStore& params, AdamState& state, std::size_t t, const AdamConfig& cfg) {
  if (t == 0) throw ParameterError("adam: step index t must be >= 1");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw StateError("adam: moment buffers do not match the parameter store");
  }
  const double step = static_cast<double>(t);
  const kernels::AdamCoeffs coeffs{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps,
                                   1.0 - std::pow(cfg.beta1, step), 1.0 - std::pow(cfg.beta2, step)};
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Tensor& theta = params.value(i);
    if (state.m[i].shape() != theta.shape() || state.v[i].shape() != theta.shape()) {
      throw StateError("adam: moment shape mismatch for '" + params.name(i) + "'");
    }
    kernels::adam_update(theta.size(), theta.data(), params.grad(i).data(), state.m[i].data(), state.v[i].data(),
                         coeffs);
  }
}

}  // namespace bima::train
