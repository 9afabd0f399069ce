// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/geo_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geomanifold/error.hpp"

namespace gm {

void AttentionConfig::validate() const {
  if (model_dim == 0 || n_heads == 0 || model_dim % n_heads != 0)
    throw UsageError("attention: n_heads must divide model_dim");
  if (!(geo_weight >= 0.0)) throw UsageError("attention: geo_weight must be >= 0");
}

const char* to_string(ExpertKind k) { return k == ExpertKind::swiglu ? "swiglu" : "geglu"; }

ExpertKind expert_kind_from_string(const std::string& s) {
  if (s == "swiglu") return ExpertKind::swiglu;
  if (s == "geglu") return ExpertKind::geglu;
  throw UsageError("unknown expert kind '" + s + "'");
}

void MoEConfig::validate() const {
  if (n_experts < 2) throw UsageError("moe: need at least 2 experts");
  if (kinds.size() != n_experts) throw UsageError("moe: kinds must list one entry per expert");
  if (top_k < 1 || top_k > n_experts) throw UsageError("moe: top_k must be in 1..n_experts");
  if (hidden_dim == 0) throw UsageError("moe: hidden_dim must be positive");
}

Tensor block_mask(std::size_t batch, std::size_t n_tokens, bool causal) {
  const std::size_t n = batch * n_tokens;
  Tensor m = Tensor::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const bool same = i % batch == j % batch;
      const bool visible = !causal || j / batch <= i / batch;
      if (!(same && visible)) m.at(i, j) = -1e30;
    }
  return m;
}

Var attention_weights(Var q, Var k, Var d_geo, double lambda, const Tensor* mask) {
  if (!(lambda >= 0.0)) throw UsageError("attention: lambda must be >= 0");
  Tape& tape = q.tape();
  Var logits = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (d_geo.valid()) logits = sub(logits, scale(d_geo, lambda));
  if (mask != nullptr) logits = add(logits, tape.constant(*mask));
  return softmax_rows(logits);
}

Var geodesic_attention(Var q, Var k, Var v, Var d_geo, double lambda, const Tensor* mask) {
  if (q.rows() != k.rows() || k.rows() != v.rows())
    throw ShapeError("attention: sequence lengths differ");
  return matmul(attention_weights(q, k, d_geo, lambda, mask), v);
}

// ---- mixture of experts ----------------------------------------------------

MoEFFN MoEFFN::create(ParameterStore& store, const std::string& name, std::size_t model_dim,
                      const MoEConfig& cfg, Rng& rng) {
  cfg.validate();
  MoEFFN m;
  m.cfg_ = cfg;
  m.router_ = Linear::create(store, name + ".router", model_dim, cfg.n_experts, rng);
  for (std::size_t e = 0; e < cfg.n_experts; ++e) {
    const std::string p = name + ".expert" + std::to_string(e);
    m.experts_.push_back({cfg.kinds[e], Linear::create(store, p + ".w1", model_dim, cfg.hidden_dim, rng),
                          Linear::create(store, p + ".w2", model_dim, cfg.hidden_dim, rng),
                          Linear::create(store, p + ".w3", cfg.hidden_dim, model_dim, rng)});
  }
  return m;
}

Var MoEFFN::expert(Tape& tape, std::size_t e, Var x) const {
  const Expert& ex = experts_.at(e);
  Var a = ex.w1(tape, x);
  a = ex.kind == ExpertKind::swiglu ? silu(a) : gelu(a);
  return ex.w3(tape, mul(a, ex.w2(tape, x)));
}

Var MoEFFN::gates(Tape& tape, Var x) const {
  Var probs = softmax_rows(router_(tape, x));
  const Tensor& p = probs.value();
  const std::size_t n = p.rows(), e = p.cols();
  Tensor keep = Tensor::zeros(n, e);
  std::vector<std::size_t> order(e);
  for (std::size_t r = 0; r < n; ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p.at(r, a) > p.at(r, b); });
    for (std::size_t i = 0; i < cfg_.top_k; ++i) keep.at(r, order[i]) = 1.0;
  }
  Var kept = mul(probs, tape.constant(std::move(keep)));
  return div(kept, sum_rows(kept));
}

Var MoEFFN::operator()(Tape& tape, Var x) const {
  Var g = gates(tape, x);
  const Tensor& gv = g.value();
  Var out;
  for (std::size_t e = 0; e < experts_.size(); ++e) {
    bool used = false;
    for (std::size_t r = 0; r < gv.rows() && !used; ++r) used = gv.at(r, e) != 0.0;
    if (!used) continue;
    Var term = mul(slice_cols(g, e, 1), expert(tape, e, x));
    out = out.valid() ? add(out, term) : term;
  }
  return out;
}

// ---- transformer -------------------------------------------------------------

GeoTransformer GeoTransformer::create(ParameterStore& store, const std::string& name,
                                      const AttentionConfig& attn, const MoEConfig& moe,
                                      std::size_t latent_dim, Geometry geometry,
                                      double boundary_margin, bool geometric, Rng& rng) {
  attn.validate();
  GeoTransformer t;
  t.attn_ = attn;
  t.geometry_ = geometry;
  t.margin_ = boundary_margin;
  t.geometric_ = geometric;
  const std::size_t m = attn.model_dim;
  for (std::size_t i = 0; i < attn.n_layers; ++i) {
    const std::string p = name + ".layer" + std::to_string(i);
    Layer l;
    l.ln1 = LayerNorm::create(store, p + ".ln1", m);
    l.wq = Linear::create(store, p + ".wq", m, m, rng);
    l.wk = Linear::create(store, p + ".wk", m, m, rng);
    l.wv = Linear::create(store, p + ".wv", m, m, rng);
    l.wo = Linear::create(store, p + ".wo", m, m, rng);
    l.ln2 = LayerNorm::create(store, p + ".ln2", m);
    if (geometric) {
      l.geo = Linear::create(store, p + ".geo", m, latent_dim, rng);
      l.moe = MoEFFN::create(store, p + ".moe", m, moe, rng);
    } else {
      l.ff1 = Linear::create(store, p + ".ffn.0", m, moe.hidden_dim, rng);
      l.ff2 = Linear::create(store, p + ".ffn.1", moe.hidden_dim, m, rng);
    }
    t.layers_.push_back(std::move(l));
  }
  return t;
}

Var GeoTransformer::layer_points(Tape& tape, std::size_t layer, Var layer_input) const {
  const Layer& l = layers_.at(layer);
  if (!geometric_) throw UsageError("layer_points: transformer is not geometric");
  return project_rows(l.geo(tape, l.ln1(tape, layer_input)), geometry_, margin_);
}

Var GeoTransformer::layer_weights(Tape& tape, std::size_t layer, std::size_t head,
                                  Var layer_input, const Tensor* mask) const {
  const Layer& l = layers_.at(layer);
  Var h = l.ln1(tape, layer_input);
  const std::size_t dk = attn_.head_dim();
  Var q = slice_cols(l.wq(tape, h), head * dk, dk);
  Var k = slice_cols(l.wk(tape, h), head * dk, dk);
  Var d_geo;
  if (geometric_) d_geo = pairwise_distance(layer_points(tape, layer, layer_input), geometry_);
  return attention_weights(q, k, d_geo, geometric_ ? attn_.geo_weight : 0.0, mask);
}

Var GeoTransformer::block(Tape& tape, const Layer& l, Var x, const Tensor* mask) const {
  Var h = l.ln1(tape, x);
  Var q = l.wq(tape, h), k = l.wk(tape, h), v = l.wv(tape, h);
  Var d_geo;
  if (geometric_)
    d_geo = pairwise_distance(project_rows(l.geo(tape, h), geometry_, margin_), geometry_);
  const double lambda = geometric_ ? attn_.geo_weight : 0.0;
  const std::size_t dk = attn_.head_dim();
  std::vector<Var> heads;
  for (std::size_t i = 0; i < attn_.n_heads; ++i)
    heads.push_back(geodesic_attention(slice_cols(q, i * dk, dk), slice_cols(k, i * dk, dk),
                                       slice_cols(v, i * dk, dk), d_geo, lambda, mask));
  Var attn = heads.size() == 1 ? heads.front() : concat_cols(heads);
  x = add(x, l.wo(tape, attn));
  h = l.ln2(tape, x);
  Var ff = geometric_ ? l.moe(tape, h) : l.ff2(tape, gelu(l.ff1(tape, h)));
  return add(x, ff);
}

Var GeoTransformer::forward(Tape& tape, Var tokens, const Tensor* mask) const {
  if (tokens.cols() != attn_.model_dim)
    throw ShapeError("transformer: token width " + std::to_string(tokens.cols()) + ", expected " +
                     std::to_string(attn_.model_dim));
  Var x = tokens;
  for (const auto& l : layers_) x = block(tape, l, x, mask);
  return x;
}

}  // namespace gm
