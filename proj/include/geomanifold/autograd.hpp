// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode gradient engine. A Tape records every operator applied to
// Vars; Tape::backprop walks the record backwards. The operator set is closed:
// layers are compositions of the free functions declared below.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geomanifold/kernels.hpp"
#include "geomanifold/tensor.hpp"

namespace gm {

/// Named trainable tensor. Gradients accumulate into value's grad slot.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the tape, the id of the node being differentiated and its
  /// upstream gradient.
  using Backward = std::function<void(Tape&, std::size_t self, std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Differentiable leaf; read its gradient with gradient() after backprop.
  Var input(Tensor value);
  /// Leaf bound to a parameter. Frozen (non-trainable) parameters act as
  /// constants. Repeated calls for the same parameter return the same node.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op_name(Var v) const { return nodes_[v.id()].op; }
  std::size_t size() const { return nodes_.size(); }
  /// Drops every node recorded at or after position n (e.g. a rejected
  /// solver step). Vars pointing there become dangling.
  void truncate(std::size_t n);

  /// Propagates seed (same dims as output) back through the tape. Parameter
  /// leaves add their gradient into Parameter::value's grad slot.
  void backprop(Var output, const Tensor& seed);
  /// Scalar outputs only: seed 1.
  void backprop(Var output);
  /// Gradient reaching v in the last backprop; exact zeros if none did.
  Tensor gradient(Var v) const;

  // Used by operator implementations.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, Backward backward);
  std::span<double> grad_buffer(std::size_t id);

 private:
  struct Node {
    const char* op;
    Tensor value;
    bool requires_grad = false;
    std::vector<double> grad;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
};

// ---- operators -----------------------------------------------------------
// Binary elementwise operators broadcast 2-D operands whose dims are equal or
// 1 (row vectors, column vectors, scalars).

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var silu(Var a);
/// Exact (erf) form.
Var gelu(Var a);
Var square(Var a);
Var sqrt(Var a);
/// Gradient is zero outside [lo, hi].
Var clamp(Var a, double lo, double hi);

/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Row-wise standardisation without affine parameters.
Var layer_norm_rows(Var a, double eps = 1e-5);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Gathers rows by index; indices may repeat.
Var take_rows(Var a, std::span<const std::size_t> indices);

/// 1x1 sum of all entries.
Var sum(Var a);
/// n x 1 column of per-row sums.
Var sum_rows(Var a);
/// 1 x m row of per-column sums.
Var sum_cols(Var a);
Var mean(Var a);
/// n x 1 Euclidean norm of each row.
Var norm_rows(Var a);

/// Row-wise manifold projection: sphere normalises, poincare rescales rows
/// with norm above 1 - boundary_margin onto that radius, euclidean is identity.
Var project_rows(Var a, Geometry g, double boundary_margin = 1e-5);
/// n x n distance matrix between the rows of a.
Var pairwise_distance(Var a, Geometry g);
/// n x 1 distances between matching rows of a and b.
Var row_distance(Var a, Var b, Geometry g);

}  // namespace gm
