// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gm {

GradCheckReport finite_diff_check(const std::function<Var(Tape&)>& loss,
                                  std::span<Parameter* const> params,
                                  const GradCheckOptions& options) {
  GradCheckReport report;
  if (params.empty()) return report;

  for (Parameter* p : params) p->value.zero_grad();
  {
    Tape tape;
    tape.backprop(loss(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (Parameter* p : params)
    analytic.emplace_back(p->value.grad().begin(), p->value.grad().end());

  auto eval = [&] {
    Tape tape;
    return loss(tape).value()[0];
  };

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const std::size_t n = p.value.size();
    std::size_t stride = 1;
    if (options.max_coords_per_param && n > options.max_coords_per_param)
      stride = (n + options.max_coords_per_param - 1) / options.max_coords_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p.value[i];
      p.value[i] = saved + options.step;
      const double up = eval();
      p.value[i] = saved - options.step;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (!(rel <= report.max_rel_error)) {
        report.max_rel_error = rel;
        report.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace gm
