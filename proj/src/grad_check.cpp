#include "bima/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace bima::nn {

GradCheckResult grad_check(ParamStore& params, const LossFn& loss, double step) {
  params.zero_grad();
  loss(params, true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(params.grad(i));

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params.value(p);
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double saved = value[j];
      value[j] = saved + step;
      const double plus = loss(params, false);
      value[j] = saved - step;
      const double minus = loss(params, false);
      value[j] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[p][j];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coordinates_checked;
      if (err > result.max_relative_error || result.worst_param.empty()) {
        if (err >= result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_param = params.name(p);
          result.worst_index = j;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace bima::nn
