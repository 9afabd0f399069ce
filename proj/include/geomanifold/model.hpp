// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "geomanifold/config.hpp"
#include "geomanifold/parameters.hpp"

namespace gm {

enum class Stage : std::uint8_t { initial = 0, pretrained = 1, transformer = 2, finetuned = 3 };
const char* to_string(Stage s);

/// Every trainable module plus the configuration it was built from.
/// Parameter names are prefixed vae., embed., tf., readout., dyn. and head.
class Model {
 public:
  /// cfg.shape must be filled in. Initial weights come from the "init"
  /// sub-stream of cfg.seed.
  explicit Model(TrainConfig cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const TrainConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  Stage stage = Stage::initial;

  std::size_t tokens_per_segment() const { return cfg_.shape.n_samples / cfg_.vae.patch_len; }
  double token_dt() const { return static_cast<double>(cfg_.vae.patch_len) / cfg_.shape.rate_hz; }
  Geometry geometry() const { return cfg_.vae.geometry(); }
  const ManifoldKind* manifold() const { return cfg_.vae.use_manifold ? &cfg_.vae.manifold : nullptr; }
  bool uses_dynamics() const { return !cfg_.ablate.disable_dynamics; }

  RVAE vae;
  Linear embed;
  GeoTransformer transformer;
  Linear readout;
  DynamicsPredictor dynamics;
  Linear head;

  /// Transformer tokens mapped back to the manifold (n x d).
  Var tokens(Tape& tape, Var z, std::size_t batch) const;
  /// Per-token representation fed to the classification head.
  Var representation(Tape& tape, Var y, std::size_t batch) const;
  /// batch x width mean over each segment's tokens.
  Var pool(Tape& tape, Var rows, std::size_t batch) const;

 private:
  TrainConfig cfg_;
  ParameterStore store_;
};

/// MFW1 container.
std::vector<std::uint8_t> encode_weights(const Model& model);
std::unique_ptr<Model> decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const std::filesystem::path& path, const Model& model);
std::unique_ptr<Model> load_weights(const std::filesystem::path& path);

}  // namespace gm
