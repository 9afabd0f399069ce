// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geomanifold/autograd.hpp"

namespace gm {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moments for one optimisation run. m[i] / v[i] belong to the i-th
/// parameter in the span handed to adamw_step.
struct AdamWState {
  AdamWConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One AdamW update using each parameter's grad slot. Decay is decoupled:
/// p -= lr * weight_decay * p, then the bias-corrected Adam step. Frozen
/// parameters and parameters without a grad slot are skipped.
///
/// Throws TrainingError naming the parameter when a gradient is not finite;
/// no parameter is modified in that case.
void adamw_step(std::span<Parameter* const> params, AdamWState& state);

}  // namespace gm
