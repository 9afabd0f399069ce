// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geomanifold/autograd.hpp"
#include "geomanifold/manifold.hpp"
#include "geomanifold/parameters.hpp"

namespace gm {

/// [sin(2 pi f 2^k t), cos(2 pi f 2^k t)] for k = 0..F-1, interleaved.
std::vector<double> context_features(double t, std::size_t n_freq, double base_hz);

/// Supplies the context c(t) fed to the vector field, one row per time.
class ContextProvider {
 public:
  virtual ~ContextProvider() = default;
  virtual std::size_t width() const = 0;
  virtual Tensor features(std::span<const double> times) const = 0;
};

class FourierContext final : public ContextProvider {
 public:
  FourierContext(std::size_t n_freq, double base_hz);
  std::size_t width() const override { return 2 * n_freq_; }
  Tensor features(std::span<const double> times) const override;

 private:
  std::size_t n_freq_;
  double base_hz_;
};

/// Perceptron f(z, c(t)) -> tangent, tanh hidden activations.
class DynamicsField {
 public:
  static DynamicsField create(ParameterStore& store, const std::string& name, std::size_t dim,
                              std::size_t context_width, const std::vector<std::size_t>& hidden,
                              Rng& rng);
  /// z: n x d, context: n x context_width.
  Var operator()(Tape& tape, Var z, const Tensor& context) const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::vector<Linear> layers_;
};

struct SolverConfig {
  double rtol = 1e-5;
  double atol = 1e-6;
  double h0 = 0.05;
  std::size_t max_steps = 10000;
  double safety = 0.9;
  /// > 0 switches to fixed steps of (at most) this size with no error control.
  double fixed_step = 0.0;

  void validate() const;
};

struct Projection {
  Geometry geometry;
  double margin = 1e-5;
};

struct SolveStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// f(tape, z, t) with t the absolute solver time.
using VectorField = std::function<Var(Tape&, Var, double)>;

/// Dormand-Prince 5(4) from t0 to t1 recorded on the tape, so gradients flow
/// through every accepted stage. All rows share one step size; a step is
/// accepted when every row satisfies ||err|| <= atol + rtol * max(||z||, ||z'||).
/// With a projection, the state is projected after each accepted step.
/// Throws DivergenceError when the step budget runs out.
Var dopri5_integrate(Tape& tape, const VectorField& f, Var z0, double t0, double t1,
                     const SolverConfig& cfg, const Projection* proj = nullptr,
                     SolveStats* stats = nullptr);

/// Causal self-attention stack over time-major rows (row = t * batch + b).
/// Row (t, b) summarises z_{<=t} of segment b.
class CausalEncoder {
 public:
  static CausalEncoder create(ParameterStore& store, const std::string& name, std::size_t dim,
                              std::size_t n_layers, Rng& rng);
  Var operator()(Tape& tape, Var seq, std::size_t batch) const;

 private:
  struct Layer {
    LayerNorm ln1, ln2;
    Linear wq, wk, wv, wo, ff1, ff2;
  };
  std::vector<Layer> layers_;
};

class LSTMCell {
 public:
  static LSTMCell create(ParameterStore& store, const std::string& name, std::size_t in,
                         std::size_t hidden, Rng& rng);
  /// Returns (h', c').
  std::pair<Var, Var> operator()(Tape& tape, Var x, Var h, Var c) const;
  std::size_t hidden() const { return hidden_; }

 private:
  std::size_t hidden_ = 0;
  Linear wx, wh;
};

/// Bidirectional LSTM summaries of every prefix. Row (t, b) is
/// [forward state after z_t || backward state after running z_t .. z_0].
class BiLSTM {
 public:
  static BiLSTM create(ParameterStore& store, const std::string& name, std::size_t in,
                       std::size_t hidden, Rng& rng);
  Var operator()(Tape& tape, Var seq, std::size_t batch) const;
  std::size_t out_width() const { return 2 * fwd_.hidden(); }

 private:
  LSTMCell fwd_, bwd_;
};

struct DynamicsConfig {
  std::vector<std::size_t> field_hidden = {64, 64};
  std::size_t fourier_features = 4;
  double fourier_base_hz = 0.25;
  std::size_t causal_layers = 2;
  SolverConfig solver;

  void validate() const;
};

/// Next-token predictor: integrates every token for one token interval,
/// summarises prefixes with the causal and recurrent encoders, and fuses the
/// three into a point on the manifold.
class DynamicsPredictor {
 public:
  static DynamicsPredictor create(ParameterStore& store, const std::string& name,
                                  const DynamicsConfig& cfg, std::size_t dim, Projection proj,
                                  Rng& rng);

  /// y: time-major tokens (n = P * batch rows, d cols) at times t * token_dt.
  Var operator()(Tape& tape, Var y, std::size_t batch, double token_dt,
                 SolveStats* stats = nullptr) const;
  Var integrate(Tape& tape, Var y, std::size_t batch, double token_dt,
                SolveStats* stats = nullptr) const;
  Var fuse(Tape& tape, Var z_ode, Var tf_summary, Var lstm_summary) const;

  const DynamicsField& field() const { return field_; }
  const ContextProvider& context() const { return *context_; }
  const CausalEncoder& causal() const { return causal_; }
  const BiLSTM& recurrent() const { return lstm_; }

 private:
  DynamicsConfig cfg_;
  Projection proj_{Geometry::sphere};
  std::shared_ptr<const ContextProvider> context_;
  DynamicsField field_;
  CausalEncoder causal_;
  BiLSTM lstm_;
  Linear fusion_;
};

}  // namespace gm
