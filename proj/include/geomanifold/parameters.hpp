// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "geomanifold/autograd.hpp"
#include "geomanifold/rng.hpp"

namespace gm {

/// Owns every named parameter of a model. Addresses are stable, so modules
/// keep plain Parameter pointers into the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  /// Throws UsageError on a duplicate name.
  Parameter& add(std::string name, Tensor value);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  /// Parameters whose name starts with prefix.
  std::vector<Parameter*> with_prefix(const std::string& prefix);
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void set_trainable(const std::string& prefix, bool trainable);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Dense affine map x W + b with W of shape in x out.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  /// Glorot-uniform weights scaled by gain; zero bias.
  static Linear create(ParameterStore& store, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng, double gain = 1.0);
  Var operator()(Tape& tape, Var x) const;
  std::size_t in_features() const { return weight->value.rows(); }
  std::size_t out_features() const { return weight->value.cols(); }
};

/// Learnable gain and shift applied after layer_norm_rows.
struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* shift = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t width);
  Var operator()(Tape& tape, Var x) const;
};

}  // namespace gm
