#pragma once

#include <functional>
#include <string>
#include <vector>

#include "duffin/autograd.hpp"

namespace duffin {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t worst_index = 0;
  size_t checked = 0;
};

// Compares backward() gradients against central finite differences. The
// finite-difference side evaluates the graph builder forward only, so it is
// independent of every backward rule it checks. Run in 64-bit: the
// perturbation step is too small for float storage.
inline GradCheckReport grad_check(ParameterStore<double>& params,
                                  const std::function<Var<double>()>& build_loss,
                                  double step = 1e-4) {
  if (params.trainable_scalars() > size_t(10000))
    throw config_error("grad_check: too many parameters for finite differences");

  Var<double> loss = build_loss();
  backward(loss);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& r : params.records()) analytic.push_back(r.var.grad());

  GradCheckReport report;
  for (size_t ri = 0; ri < params.size(); ++ri) {
    auto& r = params.records()[ri];
    if (!r.trainable) continue;
    Tensor<double>& value = r.var.value();
    for (size_t j = 0; j < value.numel(); ++j) {
      const double saved = value[j];
      value[j] = saved + step;
      const double lp = build_loss().value()[0];
      value[j] = saved - step;
      const double lm = build_loss().value()[0];
      value[j] = saved;
      const double fd = (lp - lm) / (2.0 * step);
      const double an = analytic[ri][j];
      const double denom = std::max(std::abs(fd) + std::abs(an), 1e-6);
      const double rel = std::abs(fd - an) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = r.name;
        report.worst_index = j;
      }
    }
  }
  return report;
}

}  // namespace duffin
