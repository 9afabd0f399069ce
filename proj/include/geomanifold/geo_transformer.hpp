// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "geomanifold/autograd.hpp"
#include "geomanifold/manifold.hpp"
#include "geomanifold/parameters.hpp"

namespace gm {

struct AttentionConfig {
  std::size_t n_layers = 8;
  std::size_t model_dim = 256;
  std::size_t n_heads = 8;
  double geo_weight = 0.5;  // lambda

  void validate() const;
  std::size_t head_dim() const { return model_dim / n_heads; }
};

enum class ExpertKind { swiglu, geglu };
const char* to_string(ExpertKind k);
ExpertKind expert_kind_from_string(const std::string& s);

struct MoEConfig {
  std::size_t n_experts = 4;
  std::vector<ExpertKind> kinds = {ExpertKind::swiglu, ExpertKind::geglu, ExpertKind::swiglu,
                                   ExpertKind::geglu};
  std::size_t hidden_dim = 512;
  std::size_t top_k = 2;

  void validate() const;
};

/// Additive attention mask over time-major rows (row = t * batch + b):
/// 0 where row i may attend to row j, -1e30 elsewhere. Rows of different
/// segments never see each other; causal additionally hides j with t_j > t_i.
Tensor block_mask(std::size_t batch, std::size_t n_tokens, bool causal);

/// softmax(q k^T / sqrt(d_k) - lambda * d_geo + mask), row-wise. d_geo may be
/// an invalid Var (no geometric term); mask may be null.
Var attention_weights(Var q, Var k, Var d_geo, double lambda, const Tensor* mask);
Var geodesic_attention(Var q, Var k, Var v, Var d_geo, double lambda, const Tensor* mask);

class MoEFFN {
 public:
  static MoEFFN create(ParameterStore& store, const std::string& name, std::size_t model_dim,
                       const MoEConfig& cfg, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
  Var expert(Tape& tape, std::size_t e, Var x) const;
  /// Router probabilities after top-k masking and renormalisation.
  Var gates(Tape& tape, Var x) const;
  const Linear& router() const { return router_; }
  const MoEConfig& config() const { return cfg_; }

 private:
  struct Expert {
    ExpertKind kind;
    Linear w1, w2, w3;
  };
  MoEConfig cfg_;
  Linear router_;
  std::vector<Expert> experts_;
};

/// Stack of pre-norm residual blocks over model_dim tokens. In geometric mode
/// each layer maps its normalised input to the latent manifold through a
/// learned linear map and penalises attention by the pairwise geodesic
/// distance there; the FFN is a mixture of experts. Otherwise blocks are plain
/// multi-head attention plus a dense GELU FFN.
class GeoTransformer {
 public:
  static GeoTransformer create(ParameterStore& store, const std::string& name,
                               const AttentionConfig& attn, const MoEConfig& moe,
                               std::size_t latent_dim, Geometry geometry, double boundary_margin,
                               bool geometric, Rng& rng);

  Var forward(Tape& tape, Var tokens, const Tensor* mask) const;
  /// Attention weights of one head of one layer given that layer's input.
  Var layer_weights(Tape& tape, std::size_t layer, std::size_t head, Var layer_input,
                    const Tensor* mask) const;
  /// Latent points used for the geometric penalty of a layer.
  Var layer_points(Tape& tape, std::size_t layer, Var layer_input) const;
  const AttentionConfig& config() const { return attn_; }
  bool geometric() const { return geometric_; }

 private:
  struct Layer {
    LayerNorm ln1, ln2;
    Linear wq, wk, wv, wo;
    Linear geo;
    MoEFFN moe;
    Linear ff1, ff2;
  };
  Var block(Tape& tape, const Layer& l, Var x, const Tensor* mask) const;

  AttentionConfig attn_;
  Geometry geometry_ = Geometry::sphere;
  double margin_ = 1e-5;
  bool geometric_ = true;
  std::vector<Layer> layers_;
};

}  // namespace gm
