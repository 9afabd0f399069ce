// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "geomanifold/autograd.hpp"

namespace gm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "name[index]" of the worst coordinate
  bool passed = true;
};

struct GradCheckOptions {
  double tolerance = 1e-6;
  double step = 1e-5;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-5;
  /// Checks at most this many coordinates per parameter (evenly strided); 0 = all.
  std::size_t max_coords_per_param = 0;
};

/// Compares reverse-mode gradients of a scalar loss against central
/// differences for every coordinate of the given parameters. loss builds the
/// whole graph on the tape it is handed and must be deterministic.
GradCheckReport finite_diff_check(const std::function<Var(Tape&)>& loss,
                                  std::span<Parameter* const> params,
                                  const GradCheckOptions& options = {});

}  // namespace gm
