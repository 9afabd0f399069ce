// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/metrics.hpp"

#include <cmath>
#include <numeric>

#include "geomanifold/error.hpp"

namespace gm {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {
  if (n_classes == 0) throw UsageError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= n_ || predicted >= n_) throw UsageError("confusion matrix: class index out of range");
  ++counts_[truth * n_ + predicted];
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) throw UsageError("accuracy of an empty confusion matrix");
  std::size_t diag = 0;
  for (std::size_t i = 0; i < n_; ++i) diag += at(i, i);
  return static_cast<double>(diag) / static_cast<double>(n);
}

double ConfusionMatrix::kappa() const {
  const double n = static_cast<double>(total());
  const double po = accuracy();
  double pe = 0.0;
  for (std::size_t k = 0; k < n_; ++k) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      row += static_cast<double>(at(k, j));
      col += static_cast<double>(at(j, k));
    }
    pe += (row / n) * (col / n);
  }
  if (pe >= 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t n_classes) {
  if (truth.size() != predicted.size()) throw UsageError("confusion: length mismatch");
  ConfusionMatrix m(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) m.add(truth[i], predicted[i]);
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(values.size()));
  return s;
}

}  // namespace gm
