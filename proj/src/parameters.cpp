// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/parameters.hpp"

#include <cmath>

#include "geomanifold/error.hpp"

namespace gm {

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
  index_[name] = params_.size();
  params_.push_back(Parameter{std::move(name), std::move(value), true});
  return params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p.name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto* p : with_prefix(prefix)) p->trainable = trainable;
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w = Tensor::zeros(in, out);
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  Linear l;
  l.weight = &store.add(name + ".weight", std::move(w));
  l.bias = &store.add(name + ".bias", Tensor::zeros(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  return add(matmul(x, tape.param(*weight)), tape.param(*bias));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t width) {
  LayerNorm ln;
  ln.gain = &store.add(name + ".gain", Tensor::filled(1, width, 1.0));
  ln.shift = &store.add(name + ".shift", Tensor::zeros(1, width));
  return ln;
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return add(mul(layer_norm_rows(x), tape.param(*gain)), tape.param(*shift));
}

}  // namespace gm
