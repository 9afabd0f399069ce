// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geomanifold/dynamics.hpp"
#include "geomanifold/geo_transformer.hpp"
#include "geomanifold/losses.hpp"
#include "geomanifold/rvae.hpp"
#include "geomanifold/signal.hpp"
#include "geomanifold/synthetic.hpp"

namespace gm {

struct PrepConfig {
  float rate_hz = 200.0f;
  FilterSpec filter;
  float window_s = 4.0f;
};

struct Ablations {
  bool disable_rvae_manifold = false;
  bool disable_geo_transformer = false;
  bool disable_dynamics = false;
  bool disable_geo_attention = false;
  bool disable_procrustes = false;

  /// Sets the flag named `name`; throws UsageError on an unknown name.
  void enable(const std::string& name);
  std::vector<std::string> active() const;
};

struct TrainSchedule {
  std::size_t epochs_pretrain = 50;
  std::size_t epochs_transformer = 100;
  std::size_t epochs_finetune = 50;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  double weight_decay = 0.01;
  double augment_scale = 0.2;  // amplitude factor drawn from U(1 - s, 1 + s)
  double augment_noise = 0.05;  // noise std relative to segment std
};

struct EvalConfig {
  std::size_t folds = 5;
  /// Leading segments of each held-out subject used as Procrustes anchors;
  /// they are excluded from scoring.
  std::size_t calibration_segments = 16;
};

/// Data-dependent model dimensions, filled in when training starts.
struct ModelShape {
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  std::size_t n_classes = 0;
  double rate_hz = 0.0;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  GeneratorConfig gen;
  PrepConfig prep;
  VAEConfig vae;
  AttentionConfig attn;
  MoEConfig moe;
  DynamicsConfig dyn;
  LossWeights loss;
  TrainSchedule train;
  EvalConfig eval;
  Ablations ablate;
  ModelShape shape;

  /// Applies derived settings (lambda = 0 under disable_geo_attention, manifold
  /// toggle, manifold dim) and validates.
  void finalize();
  void validate() const;
};

/// `key = value` lines, `#` comments, dotted keys. Unknown keys, malformed
/// values and duplicates throw UsageError naming the line.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
/// Every key, in a stable order; parse_config(to_text(c)) reproduces c.
std::string to_text(const TrainConfig& cfg);

}  // namespace gm
