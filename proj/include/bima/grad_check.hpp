#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "bima/param_store.hpp"

namespace bima::nn {

// Evaluates the scalar loss at the store's current values. When
// `with_gradient` is set it must also accumulate d loss / d params into the
// store's (already zeroed) gradient buffers.
using LossFn = std::function<double(ParamStore& params, bool with_gradient)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Central differences per coordinate against the analytic gradient.
// relative error = |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check(ParamStore& params, const LossFn& loss, double step = 1e-5);

}  // namespace bima::nn
