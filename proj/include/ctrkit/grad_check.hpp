#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctrkit/params.hpp"

namespace ctrkit {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central finite differences at 64-bit against the analytic gradients.
//
// `loss_fn(with_backward)` must rebuild the forward pass from the current
// parameter values and return the scalar loss; when `with_backward` is true
// it must also run backward so gradients accumulate into the parameter set.
// The rebuild has to be deterministic (fixed dropout seeds) so both
// perturbed evaluations see the same stochastic masks.
inline GradCheckReport grad_check(ParameterSet<double>& params,
                                  const std::function<double(bool)>& loss_fn,
                                  double h = 1e-5) {
  params.zero_grads();
  loss_fn(/*with_backward=*/true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.count());
  for (const auto& p : params.all()) analytic.push_back(p.grad.raw());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.count(); ++pi) {
    auto& p = params.at(static_cast<int>(pi));
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = loss_fn(false);
      p.value[i] = orig - h;
      const double down = loss_fn(false);
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace ctrkit
