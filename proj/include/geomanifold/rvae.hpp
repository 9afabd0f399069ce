// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geomanifold/autograd.hpp"
#include "geomanifold/manifold.hpp"
#include "geomanifold/parameters.hpp"
#include "geomanifold/signal.hpp"

namespace gm {

struct VAEConfig {
  std::size_t latent_dim = 128;
  ManifoldKind manifold{ManifoldType::hypersphere, 128, 1e-5};
  /// When false the reparameterised latent is not projected and distances are
  /// Euclidean.
  bool use_manifold = true;
  std::vector<std::size_t> hidden = {512, 256};
  double kl_weight = 1e-3;
  std::size_t patch_len = 100;

  void validate() const;
  Geometry geometry() const { return use_manifold ? manifold.geometry() : Geometry::euclidean; }
};

/// Per-patch posterior parameters; one row per patch.
struct EncoderOutput {
  Var mu;
  Var log_var;  // clamped to [-10, 10]
};

/// Splits segments into non-overlapping patches of patch_len samples. Row
/// p * B + b holds patch p of segment b, laid out channel-major (C * patch_len
/// values). Throws UsageError when T is not a multiple of patch_len or the
/// segments disagree in shape.
Tensor patchify(std::span<const EEGRecording* const> segs, std::size_t patch_len);
/// Inverse of patchify for one segment b out of a batch of B: returns C x T.
Tensor unpatchify(const Tensor& patches, std::size_t batch, std::size_t b, std::size_t n_channels);

class RVAE {
 public:
  RVAE() = default;
  /// Registers parameters under "vae.".
  static RVAE create(ParameterStore& store, const VAEConfig& cfg, std::size_t n_channels,
                     Rng& rng);

  const VAEConfig& config() const { return cfg_; }
  std::size_t n_channels() const { return n_channels_; }
  std::size_t patch_width() const { return n_channels_ * cfg_.patch_len; }

  EncoderOutput encode(Tape& tape, Var patches) const;
  /// z = project(mu + eps * exp(log_var / 2)); eps == nullptr means zero noise.
  Var reparameterize(Tape& tape, const EncoderOutput& e, const Tensor* eps) const;
  /// One row per patch, patch_width() columns.
  Var decode(Tape& tape, Var z) const;

 private:
  VAEConfig cfg_;
  std::size_t n_channels_ = 0;
  std::vector<Linear> enc_;
  Linear mu_head_, lv_head_;
  std::vector<Linear> dec_;
};

/// MSE over every entry plus gamma * KL(N(mu, exp(log_var)) || N(0, I)) summed
/// over patches and averaged over the batch.
Var vae_loss(Var x, Var x_hat, const EncoderOutput& e, double gamma, std::size_t batch);
/// KL term alone, same normalisation as vae_loss.
Var kl_divergence(const EncoderOutput& e, std::size_t batch);

}  // namespace gm
