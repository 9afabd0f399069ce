// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/optim.hpp"

#include <cmath>

#include "geomanifold/error.hpp"

namespace gm {

void adamw_step(std::span<Parameter* const> params, AdamWState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->value.size(), 0.0);
      state.v[i].assign(params[i]->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw UsageError("adamw_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (const Parameter* p : params) {
    if (!p->trainable || !p->value.has_grad()) continue;
    for (double g : p->value.grad())
      if (!std::isfinite(g))
        throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
  }

  const AdamWConfig& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable || !p.value.has_grad()) continue;
    auto w = p.value.values();
    auto g = p.value.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] -= c.lr * c.weight_decay * w[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace gm
