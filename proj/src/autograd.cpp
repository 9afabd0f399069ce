// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "geomanifold/error.hpp"

namespace gm {

const Tensor& Var::value() const { return tape_->value(*this); }

// ---- tape ------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  value.clear_grad();
  nodes_.push_back(Node{"constant", std::move(value), false, {}, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  value.clear_grad();
  nodes_.push_back(Node{"input", std::move(value), true, {}, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
  Tensor copy = p.value;
  copy.clear_grad();
  nodes_.push_back(
      Node{"param", std::move(copy), p.trainable, {}, {}, p.trainable ? &p : nullptr});
  param_ids_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 Backward backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, Backward backward) {
  bool rg = false;
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw UsageError(std::string(op) + ": operands from different tapes");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(
      Node{op, std::move(value), rg, {}, rg ? std::move(backward) : Backward{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::truncate(std::size_t n) {
  if (n >= nodes_.size()) return;
  nodes_.resize(n);
  std::erase_if(param_ids_, [n](const auto& kv) { return kv.second >= n; });
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backprop(Var output, const Tensor& seed) {
  if (&output.tape() != this) throw UsageError("backprop: output belongs to another tape");
  const Tensor& out = value(output);
  if (seed.size() != out.size() || seed.rows() != out.rows())
    throw ShapeError("backprop: seed shape " + seed.shape_str() + " does not match output " +
                     out.shape_str());
  for (auto& n : nodes_) n.grad.clear();
  auto g = grad_buffer(output.id());
  std::copy(seed.values().begin(), seed.values().end(), g.begin());
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, id, n.grad);
    if (n.param) {
      Tensor& pv = n.param->value;
      if (!pv.has_grad()) pv.zero_grad();
      auto pg = pv.grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

void Tape::backprop(Var output) {
  if (value(output).size() != 1)
    throw ShapeError("backprop: implicit seed needs a scalar output, got " +
                     value(output).shape_str());
  backprop(output, Tensor::scalar(1.0));
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id()];
  Tensor g(n.value.dims());
  if (!n.grad.empty()) std::copy(n.grad.begin(), n.grad.end(), g.values().begin());
  return g;
}

// ---- helpers ---------------------------------------------------------------

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

Tensor mat(std::size_t r, std::size_t c) { return Tensor::zeros(r, c); }

struct Broadcast {
  std::size_t rows, cols;
  std::size_t ar, ac, br, bc;
  std::size_t a_index(std::size_t r, std::size_t c) const {
    return (ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c);
  }
  std::size_t b_index(std::size_t r, std::size_t c) const {
    return (br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c);
  }
};

Broadcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
  Broadcast s{0, 0, a.rows(), a.cols(), b.rows(), b.cols()};
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    shape_fail(op, a, b);
  };
  s.rows = dim(s.ar, s.br);
  s.cols = dim(s.ac, s.bc);
  return s;
}

// da/db receive (x, y) operand values and return the partial derivative.
template <class F, class DA, class DB>
Var binary(const char* op, Var a, Var b, F f, DA da, DB db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast s = broadcast(op, av, bv);
  Tensor out = mat(s.rows, s.cols);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c)
      out[r * s.cols + c] = f(av[s.a_index(r, c)], bv[s.b_index(r, c)]);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      op, std::move(out), {a, b}, [s, ai, bi, da, db](Tape& t, std::size_t, std::span<const double> g) {
        const Tensor& av = t.value(ai);
        const Tensor& bv = t.value(bi);
        const bool ga_on = t.requires_grad(ai);
        const bool gb_on = t.requires_grad(bi);
        std::span<double> ga, gb;
        if (ga_on) ga = t.grad_buffer(ai);
        if (gb_on) gb = t.grad_buffer(bi);
        for (std::size_t r = 0; r < s.rows; ++r)
          for (std::size_t c = 0; c < s.cols; ++c) {
            const double gv = g[r * s.cols + c];
            if (gv == 0.0) continue;
            const double x = av[s.a_index(r, c)];
            const double y = bv[s.b_index(r, c)];
            if (ga_on) ga[s.a_index(r, c)] += gv * da(x, y);
            if (gb_on) gb[s.b_index(r, c)] += gv * db(x, y);
          }
      });
}

// df receives (x, f(x)).
template <class F, class DF>
Var unary(const char* op, Var a, F f, DF df) {
  const Tensor& av = a.value();
  Tensor out(av.dims());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::size_t ai = a.id();
  return a.tape().record(op, std::move(out), {a},
                         [ai, df](Tape& t, std::size_t self, std::span<const double> g) {
                           const Tensor& x = t.value(ai);
                           const Tensor& y = t.value(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (g[i] != 0.0) ga[i] += g[i] * df(x[i], y[i]);
                         });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = mat(m, n);
  kernels::gemm(av.data(), bv.data(), out.data(), m, n, k, false, false);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
                         [ai, bi, m, n, k](Tape& t, std::size_t, std::span<const double> g) {
                           if (t.requires_grad(ai)) {
                             std::vector<double> tmp(m * k);
                             // dA = G B^T
                             kernels::gemm(g.data(), t.value(bi).data(), tmp.data(), m, k, n,
                                           false, true);
                             auto ga = t.grad_buffer(ai);
                             for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
                           }
                           if (t.requires_grad(bi)) {
                             std::vector<double> tmp(k * n);
                             // dB = A^T G
                             kernels::gemm(t.value(ai).data(), g.data(), tmp.data(), k, n, m,
                                           true, false);
                             auto gb = t.grad_buffer(bi);
                             for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += tmp[i];
                           }
                         });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("matmul_nt", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out = mat(m, n);
  kernels::gemm(av.data(), bv.data(), out.data(), m, n, k, false, true);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("matmul_nt", std::move(out), {a, b},
                         [ai, bi, m, n, k](Tape& t, std::size_t, std::span<const double> g) {
                           if (t.requires_grad(ai)) {
                             std::vector<double> tmp(m * k);
                             // dA = G B
                             kernels::gemm(g.data(), t.value(bi).data(), tmp.data(), m, k, n,
                                           false, false);
                             auto ga = t.grad_buffer(ai);
                             for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
                           }
                           if (t.requires_grad(bi)) {
                             std::vector<double> tmp(n * k);
                             // dB = G^T A
                             kernels::gemm(g.data(), t.value(ai).data(), tmp.data(), n, k, m,
                                           true, false);
                             auto gb = t.grad_buffer(bi);
                             for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += tmp[i];
                           }
                         });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  const std::size_t ai = a.id();
  return a.tape().record("transpose", std::move(out), {a},
                         [ai, r, c](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                         });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tensor out = a.value().reshaped({rows, cols});
  const std::size_t ai = a.id();
  return a.tape().record("reshape", std::move(out), {a},
                         [ai](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

// ---- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var scale(Var a, double s) {
  return unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var silu(Var a) {
  return unary(
      "silu", a, [](double x) { return x * stable_sigmoid(x); },
      [](double x, double) {
        const double s = stable_sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var gelu(Var a) {
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- row-wise normalisations --------------------------------------------------

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  const std::size_t ai = a.id();
  return a.tape().record("softmax_rows", std::move(out), {a},
                         [ai, r, c](Tape& t, std::size_t self, std::span<const double> g) {
                           const Tensor& y = t.value(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < r; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                             for (std::size_t j = 0; j < c; ++j)
                               ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                           }
                         });
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lse;
  }
  const std::size_t ai = a.id();
  return a.tape().record("log_softmax_rows", std::move(out), {a},
                         [ai, r, c](Tape& t, std::size_t self, std::span<const double> g) {
                           const Tensor& y = t.value(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < r; ++i) {
                             double gs = 0.0;
                             for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
                             for (std::size_t j = 0; j < c; ++j)
                               ga[i * c + j] += g[i * c + j] - std::exp(y[i * c + j]) * gs;
                           }
                         });
}

Var layer_norm_rows(Var a, double eps) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(r, c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (x[j] - mu) * inv_std[i];
  }
  const std::size_t ai = a.id();
  return a.tape().record(
      "layer_norm_rows", std::move(out), {a},
      [ai, r, c, inv_std = std::move(inv_std)](Tape& t, std::size_t self,
                                               std::span<const double> g) {
        const Tensor& y = t.value(self);
        auto ga = t.grad_buffer(ai);
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          double gm = 0.0, gy = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            gm += g[i * c + j];
            gy += g[i * c + j] * y[i * c + j];
          }
          gm *= inv_c;
          gy *= inv_c;
          for (std::size_t j = 0; j < c; ++j)
            ga[i * c + j] += inv_std[i] * (g[i * c + j] - gm - y[i * c + j] * gy);
        }
      });
}

// ---- structural ----------------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no operands");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  std::vector<std::size_t> widths, ids;
  for (const Var& p : parts) {
    if (p.rows() != r) shape_fail("concat_cols", parts[0].value(), p.value());
    widths.push_back(p.cols());
    ids.push_back(p.id());
    c += p.cols();
  }
  Tensor out = mat(r, c);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.data() + i * pv.cols(), pv.cols(), out.data() + i * c + off);
    off += pv.cols();
  }
  return parts[0].tape().record(
      "concat_cols", std::move(out), parts,
      [r, c, widths, ids](Tape& t, std::size_t, std::span<const double> g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            auto gp = t.grad_buffer(ids[k]);
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                gp[i * widths[k] + j] += g[i * c + off + j];
          }
          off += widths[k];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no operands");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  std::vector<std::size_t> sizes, ids;
  for (const Var& p : parts) {
    if (p.cols() != c) shape_fail("concat_rows", parts[0].value(), p.value());
    sizes.push_back(p.value().size());
    ids.push_back(p.id());
    r += p.rows();
  }
  Tensor out = mat(r, c);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + off);
    off += p.value().size();
  }
  return parts[0].tape().record("concat_rows", std::move(out), parts,
                                [sizes, ids](Tape& t, std::size_t, std::span<const double> g) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (t.requires_grad(ids[k])) {
                                      auto gp = t.grad_buffer(ids[k]);
                                      for (std::size_t i = 0; i < sizes[k]; ++i)
                                        gp[i] += g[off + i];
                                    }
                                    off += sizes[k];
                                  }
                                });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (count == 0 || begin + count > av.cols())
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + av.shape_str());
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(r, count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(av.data() + i * c + begin, count, out.data() + i * count);
  const std::size_t ai = a.id();
  return a.tape().record("slice_cols", std::move(out), {a},
                         [ai, r, c, begin, count](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < count; ++j)
                               ga[i * c + begin + j] += g[i * count + j];
                         });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (count == 0 || begin + count > av.rows())
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + av.shape_str());
  const std::size_t c = av.cols();
  Tensor out = mat(count, c);
  std::copy_n(av.data() + begin * c, count * c, out.data());
  const std::size_t ai = a.id();
  return a.tape().record("slice_rows", std::move(out), {a},
                         [ai, c, begin](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
                         });
}

Var take_rows(Var a, std::span<const std::size_t> indices) {
  const Tensor& av = a.value();
  const std::size_t c = av.cols();
  if (indices.empty()) throw ShapeError("take_rows: empty index list");
  Tensor out = mat(indices.size(), c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.rows())
      throw ShapeError("take_rows: index " + std::to_string(indices[i]) + " out of range for " +
                       av.shape_str());
    std::copy_n(av.data() + indices[i] * c, c, out.data() + i * c);
  }
  const std::size_t ai = a.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return a.tape().record("take_rows", std::move(out), {a},
                         [ai, c, idx](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += g[i * c + j];
                         });
}

// ---- reductions ----------------------------------------------------------------

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ai = a.id();
  return a.tape().record("sum", Tensor::scalar(s), {a},
                         [ai](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (double& x : ga) x += g[0];
                         });
}

Var sum_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j];
    out[i] = s;
  }
  const std::size_t ai = a.id();
  return a.tape().record("sum_rows", std::move(out), {a},
                         [ai, r, c](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
                         });
}

Var sum_cols(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  const std::size_t ai = a.id();
  return a.tape().record("sum_cols", std::move(out), {a},
                         [ai, r, c](Tape& t, std::size_t, std::span<const double> g) {
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
                         });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var norm_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = mat(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j] * av[i * c + j];
    out[i] = std::sqrt(s);
  }
  const std::size_t ai = a.id();
  return a.tape().record("norm_rows", std::move(out), {a},
                         [ai, r, c](Tape& t, std::size_t self, std::span<const double> g) {
                           const Tensor& x = t.value(ai);
                           const Tensor& n = t.value(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < r; ++i) {
                             if (n[i] == 0.0) continue;
                             for (std::size_t j = 0; j < c; ++j)
                               ga[i * c + j] += g[i] * x[i * c + j] / n[i];
                           }
                         });
}

// ---- geometry ----------------------------------------------------------------------

Var project_rows(Var a, Geometry g, double boundary_margin) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = av;
  std::vector<double> norms(r);
  std::vector<char> scaled(r, 0);
  const double radius = 1.0 - boundary_margin;
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j] * av[i * c + j];
    norms[i] = std::sqrt(s);
    if (g == Geometry::sphere) {
      if (norms[i] < 1e-12)
        throw DegenerateInputError("project_rows: row " + std::to_string(i) +
                                   " has near-zero norm; hypersphere direction undefined");
      scaled[i] = 1;
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= norms[i];
    } else if (g == Geometry::poincare && norms[i] > radius) {
      scaled[i] = 1;
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= radius / norms[i];
    }
  }
  const std::size_t ai = a.id();
  const double target = g == Geometry::sphere ? 1.0 : radius;
  return a.tape().record(
      "project_rows", std::move(out), {a},
      [ai, r, c, target, norms = std::move(norms), scaled = std::move(scaled)](
          Tape& t, std::size_t, std::span<const double> gr) {
        const Tensor& x = t.value(ai);
        auto ga = t.grad_buffer(ai);
        for (std::size_t i = 0; i < r; ++i) {
          if (!scaled[i]) {
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gr[i * c + j];
            continue;
          }
          // y = target * u with u = x / |x|: dx = target (g - u <u, g>) / |x|
          double ug = 0.0;
          for (std::size_t j = 0; j < c; ++j) ug += x[i * c + j] * gr[i * c + j];
          ug /= norms[i];
          for (std::size_t j = 0; j < c; ++j)
            ga[i * c + j] +=
                target * (gr[i * c + j] - x[i * c + j] / norms[i] * ug) / norms[i];
        }
      });
}

Var pairwise_distance(Var a, Geometry g) {
  const Tensor& av = a.value();
  const std::size_t n = av.rows(), d = av.cols();
  Tensor out = mat(n, n);
  kernels::pairwise_distance(g, av.data(), n, d, out.data());
  const std::size_t ai = a.id();
  return a.tape().record("pairwise_distance", std::move(out), {a},
                         [ai, n, d, g](Tape& t, std::size_t, std::span<const double> gr) {
                           std::vector<double> tmp(n * d, 0.0);
                           kernels::pairwise_distance_backward(g, t.value(ai).data(), gr.data(),
                                                               n, d, tmp.data());
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
                         });
}

Var row_distance(Var a, Var b, Geometry g) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("row_distance", av, bv);
  const std::size_t n = av.rows(), d = av.cols();
  Tensor out = mat(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = kernels::distance(g, av.data() + i * d, bv.data() + i * d, d);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("row_distance", std::move(out), {a, b},
                         [ai, bi, n, d, g](Tape& t, std::size_t, std::span<const double> gr) {
                           const double* x = t.value(ai).data();
                           const double* y = t.value(bi).data();
                           if (t.requires_grad(ai)) {
                             auto ga = t.grad_buffer(ai);
                             for (std::size_t i = 0; i < n; ++i)
                               kernels::distance_grad_first(g, x + i * d, y + i * d, d, gr[i],
                                                            ga.data() + i * d);
                           }
                           if (t.requires_grad(bi)) {
                             auto gb = t.grad_buffer(bi);
                             for (std::size_t i = 0; i < n; ++i)
                               kernels::distance_grad_first(g, y + i * d, x + i * d, d, gr[i],
                                                            gb.data() + i * d);
                           }
                         });
}

}  // namespace gm
