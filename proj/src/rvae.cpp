// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/rvae.hpp"

#include <cmath>

#include "geomanifold/error.hpp"

namespace gm {

void VAEConfig::validate() const {
  if (latent_dim < 2) throw UsageError("vae.latent_dim must be at least 2");
  if (hidden.empty()) throw UsageError("vae.hidden must list at least one width");
  for (auto w : hidden)
    if (w == 0) throw UsageError("vae.hidden widths must be positive");
  if (patch_len == 0) throw UsageError("vae.patch_len must be positive");
  if (kl_weight < 0) throw UsageError("vae.kl_weight must be >= 0");
  if (manifold.dim != latent_dim) throw UsageError("manifold dim must equal vae.latent_dim");
  manifold.validate();
}

Tensor patchify(std::span<const EEGRecording* const> segs, std::size_t patch_len) {
  if (segs.empty()) throw UsageError("patchify: empty batch");
  const auto& f = *segs.front();
  if (patch_len == 0 || f.n_samples % patch_len != 0)
    throw UsageError("patchify: " + std::to_string(f.n_samples) +
                     " samples is not a multiple of patch length " + std::to_string(patch_len));
  const std::size_t batch = segs.size(), c = f.n_channels, n_patch = f.n_samples / patch_len;
  Tensor out = Tensor::zeros(n_patch * batch, c * patch_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& s = *segs[b];
    if (s.n_channels != c || s.n_samples != f.n_samples)
      throw UsageError("patchify: segments differ in shape");
    for (std::size_t p = 0; p < n_patch; ++p) {
      double* row = out.row(p * batch + b).data();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t l = 0; l < patch_len; ++l)
          row[ch * patch_len + l] = s.data[ch * s.n_samples + p * patch_len + l];
    }
  }
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t batch, std::size_t b, std::size_t n_channels) {
  const std::size_t n_patch = patches.rows() / batch;
  const std::size_t len = patches.cols() / n_channels;
  if (n_patch * batch != patches.rows() || len * n_channels != patches.cols() || b >= batch)
    throw UsageError("unpatchify: inconsistent layout " + patches.shape_str());
  Tensor out = Tensor::zeros(n_channels, n_patch * len);
  for (std::size_t p = 0; p < n_patch; ++p) {
    auto row = patches.row(p * batch + b);
    for (std::size_t ch = 0; ch < n_channels; ++ch)
      for (std::size_t l = 0; l < len; ++l) out.at(ch, p * len + l) = row[ch * len + l];
  }
  return out;
}

RVAE RVAE::create(ParameterStore& store, const VAEConfig& cfg, std::size_t n_channels, Rng& rng) {
  cfg.validate();
  RVAE m;
  m.cfg_ = cfg;
  m.n_channels_ = n_channels;
  std::size_t in = n_channels * cfg.patch_len;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    m.enc_.push_back(Linear::create(store, "vae.enc." + std::to_string(i), in, cfg.hidden[i], rng));
    in = cfg.hidden[i];
  }
  m.mu_head_ = Linear::create(store, "vae.mu", in, cfg.latent_dim, rng);
  m.lv_head_ = Linear::create(store, "vae.logvar", in, cfg.latent_dim, rng, 0.1);
  std::size_t width = cfg.latent_dim;
  for (std::size_t i = cfg.hidden.size(); i-- > 0;) {
    m.dec_.push_back(Linear::create(store, "vae.dec." + std::to_string(m.dec_.size()), width,
                                    cfg.hidden[i], rng));
    width = cfg.hidden[i];
  }
  m.dec_.push_back(Linear::create(store, "vae.dec." + std::to_string(m.dec_.size()), width,
                                  n_channels * cfg.patch_len, rng));
  return m;
}

EncoderOutput RVAE::encode(Tape& tape, Var patches) const {
  if (patches.cols() != patch_width())
    throw ShapeError("encode: patch width " + std::to_string(patches.cols()) + ", expected " +
                     std::to_string(patch_width()));
  Var h = patches;
  for (const auto& l : enc_) h = gelu(l(tape, h));
  return {mu_head_(tape, h), clamp(lv_head_(tape, h), -10.0, 10.0)};
}

Var RVAE::reparameterize(Tape& tape, const EncoderOutput& e, const Tensor* eps) const {
  Var pre = e.mu;
  if (eps != nullptr) {
    Var noise = tape.constant(*eps);
    pre = add(e.mu, mul(noise, exp(scale(e.log_var, 0.5))));
  }
  return project_rows(pre, cfg_.geometry(), cfg_.manifold.boundary_margin);
}

Var RVAE::decode(Tape& tape, Var z) const {
  if (z.cols() != cfg_.latent_dim)
    throw ShapeError("decode: latent width " + std::to_string(z.cols()) + ", expected " +
                     std::to_string(cfg_.latent_dim));
  Var h = z;
  for (std::size_t i = 0; i + 1 < dec_.size(); ++i) h = gelu(dec_[i](tape, h));
  return dec_.back()(tape, h);
}

Var kl_divergence(const EncoderOutput& e, std::size_t batch) {
  // 0.5 * sum(exp(lv) + mu^2 - 1 - lv)
  Var terms = sub(add(exp(e.log_var), square(e.mu)), add_scalar(e.log_var, 1.0));
  return scale(sum(terms), 0.5 / static_cast<double>(batch));
}

Var vae_loss(Var x, Var x_hat, const EncoderOutput& e, double gamma, std::size_t batch) {
  Var mse = mean(square(sub(x_hat, x)));
  if (gamma == 0.0) return mse;
  return add(mse, scale(kl_divergence(e, batch), gamma));
}

}  // namespace gm
