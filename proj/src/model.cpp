// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/model.hpp"

#include "geomanifold/error.hpp"

namespace gm {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::initial: return "initial";
    case Stage::pretrained: return "pretrained";
    case Stage::transformer: return "transformer";
    case Stage::finetuned: return "finetuned";
  }
  return "unknown";
}

Model::Model(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.finalize();
  const auto& sh = cfg_.shape;
  if (sh.n_channels == 0 || sh.n_samples == 0 || sh.n_classes < 2 || !(sh.rate_hz > 0))
    throw UsageError("model shape is incomplete (channels, samples, classes, rate)");
  if (sh.n_samples % cfg_.vae.patch_len != 0)
    throw UsageError("segment length " + std::to_string(sh.n_samples) +
                     " is not a multiple of vae.patch_len " + std::to_string(cfg_.vae.patch_len));

  Rng rng = Rng::stream(cfg_.seed, "init");
  const std::size_t d = cfg_.vae.latent_dim, m = cfg_.attn.model_dim;
  vae = RVAE::create(store_, cfg_.vae, sh.n_channels, rng);
  embed = Linear::create(store_, "embed", d, m, rng);
  transformer = GeoTransformer::create(store_, "tf", cfg_.attn, cfg_.moe, d, geometry(),
                                       cfg_.vae.manifold.boundary_margin,
                                       !cfg_.ablate.disable_geo_transformer, rng);
  readout = Linear::create(store_, "readout", m, d, rng);
  dynamics = DynamicsPredictor::create(store_, "dyn", cfg_.dyn, d,
                                       {geometry(), cfg_.vae.manifold.boundary_margin}, rng);
  head = Linear::create(store_, "head", d, sh.n_classes, rng);
}

Var Model::tokens(Tape& tape, Var z, std::size_t batch) const {
  const Tensor mask = block_mask(batch, z.rows() / batch, false);
  Var h = transformer.forward(tape, embed(tape, z), &mask);
  return project_rows(readout(tape, h), geometry(), cfg_.vae.manifold.boundary_margin);
}

Var Model::representation(Tape& tape, Var y, std::size_t batch) const {
  if (!uses_dynamics()) return y;
  return dynamics(tape, y, batch, token_dt());
}

Var Model::pool(Tape& tape, Var rows, std::size_t batch) const {
  const std::size_t n = rows.rows();
  Tensor p = Tensor::zeros(batch, n);
  const double w = static_cast<double>(batch) / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) p.at(r % batch, r) = w;
  return matmul(tape.constant(std::move(p)), rows);
}

}  // namespace gm
