// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& dims);
std::string shape_str(const Shape& dims);

/// Dense row-major fp64 array with an optional gradient slot.
///
/// Rank 1 tensors behave as a single row wherever a matrix view is needed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims);
  Tensor(Shape dims, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);

  const Shape& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::string shape_str() const { return gm::shape_str(dims_); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }
  std::vector<double>& storage() { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  bool has_grad() const { return grad_.has_value(); }
  std::span<const double> grad() const;
  std::span<double> grad();
  /// Allocates the gradient slot if needed and fills it with zeros.
  void zero_grad();
  void clear_grad() { grad_.reset(); }

  bool all_finite() const;
  /// Same dims and bit-identical values; the gradient slot is ignored.
  bool identical(const Tensor& other) const;
  Tensor reshaped(Shape dims) const;

 private:
  Shape dims_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
};

}  // namespace gm
