// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "geomanifold/error.hpp"
#include "geomanifold/geo_transformer.hpp"

namespace gm {

std::vector<double> context_features(double t, std::size_t n_freq, double base_hz) {
  if (n_freq == 0) throw UsageError("context_features: need at least one frequency");
  std::vector<double> out;
  out.reserve(2 * n_freq);
  double f = base_hz;
  for (std::size_t k = 0; k < n_freq; ++k, f *= 2.0) {
    const double a = 2.0 * std::numbers::pi * f * t;
    out.push_back(std::sin(a));
    out.push_back(std::cos(a));
  }
  return out;
}

FourierContext::FourierContext(std::size_t n_freq, double base_hz)
    : n_freq_(n_freq), base_hz_(base_hz) {
  if (n_freq == 0) throw UsageError("fourier context: need at least one frequency");
}

Tensor FourierContext::features(std::span<const double> times) const {
  Tensor out = Tensor::zeros(times.size(), width());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto f = context_features(times[i], n_freq_, base_hz_);
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

// ---- field -------------------------------------------------------------------

DynamicsField DynamicsField::create(ParameterStore& store, const std::string& name,
                                    std::size_t dim, std::size_t context_width,
                                    const std::vector<std::size_t>& hidden, Rng& rng) {
  DynamicsField f;
  f.dim_ = dim;
  std::size_t in = dim + context_width;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    f.layers_.push_back(Linear::create(store, name + "." + std::to_string(i), in, hidden[i], rng));
    in = hidden[i];
  }
  f.layers_.push_back(
      Linear::create(store, name + "." + std::to_string(hidden.size()), in, dim, rng, 0.1));
  return f;
}

Var DynamicsField::operator()(Tape& tape, Var z, const Tensor& context) const {
  if (z.cols() != dim_) throw ShapeError("field: state width mismatch");
  const std::array<Var, 2> parts{z, tape.constant(context)};
  Var h = concat_cols(parts);
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = tanh(layers_[i](tape, h));
  return layers_.back()(tape, h);
}

// ---- solver ------------------------------------------------------------------

void SolverConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw UsageError("solver: rtol and atol must be positive");
  if (max_steps < 1) throw UsageError("solver: max_steps must be >= 1");
  if (!(h0 > 0.0)) throw UsageError("solver: h0 must be positive");
  if (!(safety > 0.0 && safety <= 1.0)) throw UsageError("solver: safety must be in (0, 1]");
  if (!(fixed_step >= 0.0)) throw UsageError("solver: fixed_step must be >= 0");
}

namespace {

constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kB4[7] = {5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200,
                           187.0 / 2100, 1.0 / 40};

// z + h * sum_j w[j] * k[j], skipping zero weights.
Var combine(Var z, std::span<const Var> k, const double* w, double h) {
  Var acc;
  for (std::size_t j = 0; j < k.size(); ++j) {
    if (w[j] == 0.0) continue;
    Var term = scale(k[j], h * w[j]);
    acc = acc.valid() ? add(acc, term) : term;
  }
  return acc.valid() ? add(z, acc) : z;
}

double error_ratio(const Tensor& z, const Tensor& z5, const std::array<Var, 7>& k, double h,
                   const SolverConfig& cfg) {
  const std::size_t n = z.rows(), d = z.cols();
  double worst = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double e2 = 0.0, a2 = 0.0, b2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double e = 0.0;
      for (std::size_t j = 0; j < 7; ++j) e += (kB5[j] - kB4[j]) * k[j].value().at(r, c);
      e *= h;
      e2 += e * e;
      a2 += z.at(r, c) * z.at(r, c);
      b2 += z5.at(r, c) * z5.at(r, c);
    }
    const double tol = cfg.atol + cfg.rtol * std::sqrt(std::max(a2, b2));
    const double ratio = std::sqrt(e2) / tol;
    if (!std::isfinite(ratio)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, ratio);
  }
  return worst;
}

}  // namespace

Var dopri5_integrate(Tape& tape, const VectorField& f, Var z0, double t0, double t1,
                     const SolverConfig& cfg, const Projection* proj, SolveStats* stats) {
  cfg.validate();
  if (!(t1 > t0)) throw UsageError("dopri5: t1 must exceed t0");
  SolveStats local;
  SolveStats& st = stats ? *stats : local;

  const bool fixed = cfg.fixed_step > 0.0;
  const double span = t1 - t0;
  std::size_t n_fixed = 0;
  double h = std::min(cfg.h0, span);
  if (fixed) {
    n_fixed = static_cast<std::size_t>(std::ceil(span / cfg.fixed_step - 1e-12));
    h = span / static_cast<double>(n_fixed);
  }

  Var z = z0;
  double t = t0;
  std::size_t attempts = 0;
  while (fixed ? st.accepted < n_fixed : t < t1) {
    if (attempts++ >= cfg.max_steps)
      throw DivergenceError("dopri5: step budget of " + std::to_string(cfg.max_steps) +
                                " exhausted at t = " + std::to_string(t),
                            t);
    const bool last = !fixed && t + h >= t1;
    const double step = fixed ? h : (last ? t1 - t : h);
    const std::size_t mark = tape.size();

    std::array<Var, 7> k;
    for (std::size_t i = 0; i < 7; ++i) {
      Var zi = i == 0 ? z : combine(z, std::span<const Var>(k.data(), i), kA[i], step);
      k[i] = f(tape, zi, t + kC[i] * step);
    }
    Var z5 = combine(z, std::span<const Var>(k.data(), 6), kB5, step);

    if (fixed) {
      z = proj ? project_rows(z5, proj->geometry, proj->margin) : z5;
      t = t0 + span * static_cast<double>(st.accepted + 1) / static_cast<double>(n_fixed);
      ++st.accepted;
      continue;
    }

    const double ratio = error_ratio(z.value(), z5.value(), k, step, cfg);
    const double factor =
        ratio == 0.0 ? 5.0 : std::clamp(cfg.safety * std::pow(1.0 / ratio, 0.2), 0.2, 5.0);
    if (ratio <= 1.0) {
      z = proj ? project_rows(z5, proj->geometry, proj->margin) : z5;
      t = last ? t1 : t + step;
      ++st.accepted;
      h = step * factor;
    } else {
      tape.truncate(mark);
      ++st.rejected;
      h = step * factor;
      if (h < 1e-12 * span)
        throw DivergenceError("dopri5: step size underflow at t = " + std::to_string(t), t);
    }
  }
  return z;
}

// ---- causal encoder ----------------------------------------------------------

CausalEncoder CausalEncoder::create(ParameterStore& store, const std::string& name,
                                    std::size_t dim, std::size_t n_layers, Rng& rng) {
  CausalEncoder e;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::string p = name + ".layer" + std::to_string(i);
    e.layers_.push_back({LayerNorm::create(store, p + ".ln1", dim),
                         LayerNorm::create(store, p + ".ln2", dim),
                         Linear::create(store, p + ".wq", dim, dim, rng),
                         Linear::create(store, p + ".wk", dim, dim, rng),
                         Linear::create(store, p + ".wv", dim, dim, rng),
                         Linear::create(store, p + ".wo", dim, dim, rng),
                         Linear::create(store, p + ".ff1", dim, 2 * dim, rng),
                         Linear::create(store, p + ".ff2", 2 * dim, dim, rng)});
  }
  return e;
}

Var CausalEncoder::operator()(Tape& tape, Var seq, std::size_t batch) const {
  if (batch == 0 || seq.rows() % batch != 0) throw ShapeError("causal encoder: bad batch");
  const Tensor mask = block_mask(batch, seq.rows() / batch, true);
  Var x = seq;
  for (const auto& l : layers_) {
    Var h = l.ln1(tape, x);
    x = add(x, l.wo(tape, geodesic_attention(l.wq(tape, h), l.wk(tape, h), l.wv(tape, h), Var{},
                                             0.0, &mask)));
    h = l.ln2(tape, x);
    x = add(x, l.ff2(tape, gelu(l.ff1(tape, h))));
  }
  return x;
}

// ---- LSTM --------------------------------------------------------------------

LSTMCell LSTMCell::create(ParameterStore& store, const std::string& name, std::size_t in,
                          std::size_t hidden, Rng& rng) {
  LSTMCell c;
  c.hidden_ = hidden;
  c.wx = Linear::create(store, name + ".wx", in, 4 * hidden, rng);
  c.wh = Linear::create(store, name + ".wh", hidden, 4 * hidden, rng);
  return c;
}

std::pair<Var, Var> LSTMCell::operator()(Tape& tape, Var x, Var h, Var c) const {
  Var gates = add(wx(tape, x), wh(tape, h));
  const std::size_t n = hidden_;
  Var i = sigmoid(slice_cols(gates, 0, n));
  Var f = sigmoid(slice_cols(gates, n, n));
  Var g = tanh(slice_cols(gates, 2 * n, n));
  Var o = sigmoid(slice_cols(gates, 3 * n, n));
  Var c2 = add(mul(f, c), mul(i, g));
  return {mul(o, tanh(c2)), c2};
}

BiLSTM BiLSTM::create(ParameterStore& store, const std::string& name, std::size_t in,
                      std::size_t hidden, Rng& rng) {
  BiLSTM b;
  b.fwd_ = LSTMCell::create(store, name + ".fwd", in, hidden, rng);
  b.bwd_ = LSTMCell::create(store, name + ".bwd", in, hidden, rng);
  return b;
}

Var BiLSTM::operator()(Tape& tape, Var seq, std::size_t batch) const {
  if (batch == 0 || seq.rows() % batch != 0) throw ShapeError("bilstm: bad batch");
  const std::size_t n_tok = seq.rows() / batch, hid = fwd_.hidden();

  std::vector<Var> fwd_states;
  Var h = tape.constant(Tensor::zeros(batch, hid)), c = h;
  for (std::size_t t = 0; t < n_tok; ++t) {
    std::tie(h, c) = fwd_(tape, slice_rows(seq, t * batch, batch), h, c);
    fwd_states.push_back(h);
  }
  Var fwd = n_tok == 1 ? fwd_states.front() : concat_rows(fwd_states);

  // Every prefix runs backwards at once: at step s, the row of prefix t reads
  // token t - s and is frozen once s > t.
  const std::size_t n = seq.rows();
  Var hb = tape.constant(Tensor::zeros(n, hid)), cb = hb;
  std::vector<std::size_t> idx(n);
  for (std::size_t s = 0; s < n_tok; ++s) {
    Tensor live = Tensor::zeros(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t t = r / batch, b = r % batch;
      idx[r] = (t >= s ? t - s : 0) * batch + b;
      live[r] = t >= s ? 1.0 : 0.0;
    }
    auto [h2, c2] = bwd_(tape, take_rows(seq, idx), hb, cb);
    if (s == 0) {
      hb = h2;
      cb = c2;
      continue;
    }
    Var m = tape.constant(live);
    Var keep = tape.constant([&] {
      Tensor k = live;
      for (auto& v : k.values()) v = 1.0 - v;
      return k;
    }());
    hb = add(mul(m, h2), mul(keep, hb));
    cb = add(mul(m, c2), mul(keep, cb));
  }
  const std::array<Var, 2> parts{fwd, hb};
  return concat_cols(parts);
}

// ---- predictor ---------------------------------------------------------------

void DynamicsConfig::validate() const {
  if (fourier_features == 0) throw UsageError("dynamics: fourier_features must be positive");
  if (!(fourier_base_hz > 0.0)) throw UsageError("dynamics: fourier_base_hz must be positive");
  for (auto w : field_hidden)
    if (w == 0) throw UsageError("dynamics: field widths must be positive");
  solver.validate();
}

DynamicsPredictor DynamicsPredictor::create(ParameterStore& store, const std::string& name,
                                            const DynamicsConfig& cfg, std::size_t dim,
                                            Projection proj, Rng& rng) {
  cfg.validate();
  DynamicsPredictor p;
  p.cfg_ = cfg;
  p.proj_ = proj;
  p.context_ = std::make_shared<FourierContext>(cfg.fourier_features, cfg.fourier_base_hz);
  p.field_ = DynamicsField::create(store, name + ".field", dim, p.context_->width(),
                                   cfg.field_hidden, rng);
  p.causal_ = CausalEncoder::create(store, name + ".causal", dim, cfg.causal_layers, rng);
  p.lstm_ = BiLSTM::create(store, name + ".lstm", dim, dim, rng);
  p.fusion_ = Linear::create(store, name + ".fusion", 2 * dim + p.lstm_.out_width(), dim, rng);
  return p;
}

Var DynamicsPredictor::integrate(Tape& tape, Var y, std::size_t batch, double token_dt,
                                 SolveStats* stats) const {
  const std::size_t n = y.rows();
  std::vector<double> base(n);
  for (std::size_t r = 0; r < n; ++r) base[r] = static_cast<double>(r / batch) * token_dt;
  std::vector<double> times(n);
  VectorField f = [&](Tape& tp, Var z, double tau) {
    for (std::size_t r = 0; r < n; ++r) times[r] = base[r] + tau;
    return field_(tp, z, context_->features(times));
  };
  return dopri5_integrate(tape, f, y, 0.0, token_dt, cfg_.solver, &proj_, stats);
}

Var DynamicsPredictor::fuse(Tape& tape, Var z_ode, Var tf_summary, Var lstm_summary) const {
  const std::array<Var, 3> parts{z_ode, tf_summary, lstm_summary};
  return project_rows(fusion_(tape, concat_cols(parts)), proj_.geometry, proj_.margin);
}

Var DynamicsPredictor::operator()(Tape& tape, Var y, std::size_t batch, double token_dt,
                                  SolveStats* stats) const {
  Var z_ode = integrate(tape, y, batch, token_dt, stats);
  return fuse(tape, z_ode, causal_(tape, y, batch), lstm_(tape, y, batch));
}

}  // namespace gm
