// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gm {

/// counts[truth][predicted].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes);
  void add(std::size_t truth, std::size_t predicted);
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::size_t n_classes() const { return n_; }
  std::size_t total() const;

  double accuracy() const;
  /// (p_o - p_e) / (1 - p_e); 1 when p_e == 1.
  double kappa() const;

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t n_classes);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
};
Summary summarize(std::span<const double> values);

}  // namespace gm
