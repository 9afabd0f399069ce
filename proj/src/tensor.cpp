// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "geomanifold/error.hpp"

namespace gm {

std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape dims) : dims_(std::move(dims)), values_(shape_size(dims_), 0.0) {
  for (auto d : dims_)
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + gm::shape_str(dims_));
}

Tensor::Tensor(Shape dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  for (auto d : dims_)
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + gm::shape_str(dims_));
  if (shape_size(dims_) != values_.size())
    throw ShapeError("tensor dims " + gm::shape_str(dims_) + " do not match " +
                     std::to_string(values_.size()) + " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

std::size_t Tensor::rows() const { return dims_.size() >= 2 ? dims_[0] : 1; }

std::size_t Tensor::cols() const {
  if (dims_.empty()) return 1;
  if (dims_.size() == 1) return dims_[0];
  return values_.size() / dims_[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(values_).subspan(r * cols(), cols());
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(values_).subspan(r * cols(), cols());
}

std::span<const double> Tensor::grad() const {
  if (!grad_) return {};
  return *grad_;
}

std::span<double> Tensor::grad() {
  if (!grad_) return {};
  return *grad_;
}

void Tensor::zero_grad() {
  if (!grad_)
    grad_.emplace(values_.size(), 0.0);
  else
    std::fill(grad_->begin(), grad_->end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::identical(const Tensor& other) const {
  return dims_ == other.dims_ &&
         std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0;
}

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_size(dims) != values_.size())
    throw ShapeError("cannot reshape " + shape_str() + " to " + gm::shape_str(dims));
  return Tensor(std::move(dims), values_);
}

}  // namespace gm
