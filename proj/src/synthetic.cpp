// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/synthetic.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>

#include "geomanifold/error.hpp"
#include "geomanifold/rng.hpp"

namespace gm {

namespace {

Eigen::MatrixXd gaussian(std::size_t r, std::size_t c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t = Tensor::zeros(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.at(i, j) = m(i, j);
  return t;
}

}  // namespace

Tensor random_rotation(std::size_t d, Rng& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(d, d, rng));
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (std::size_t j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return to_tensor(q);
}

void GeneratorConfig::validate() const {
  if (latent_dim < 3) throw UsageError("generator: latent_dim must be at least 3");
  if (n_channels < latent_dim)
    throw UsageError("generator: n_channels must be >= latent_dim for a full-rank mixing");
  if (n_classes < 2 || n_classes > 4) throw UsageError("generator: n_classes must be in 2..4");
  if (n_subjects == 0 || segments_per_class == 0)
    throw UsageError("generator: need at least one subject and segment");
  if (!(duration_s > 0.0) || !(rate_hz > 0.0)) throw UsageError("generator: bad duration/rate");
  if (static_cast<std::size_t>(std::floor(duration_s * rate_hz)) == 0)
    throw UsageError("generator: segments would be empty");
  if (!(noise_std >= 0.0)) throw UsageError("generator: noise_std must be >= 0");
  if (!(base_rate_hz > 0.0)) throw UsageError("generator: base_rate_hz must be positive");
  if (!(subject_spread >= 0.0 && subject_spread <= 1.0))
    throw UsageError("generator: subject_spread must be in [0, 1]");
}

SyntheticGenerator::SyntheticGenerator(GeneratorConfig cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  const std::size_t d = cfg_.latent_dim;
  Rng rot = Rng::stream(seed, "synth.rotation");
  for (std::size_t s = 0; s < cfg_.n_subjects; ++s) {
    if (cfg_.subject_spread >= 1.0) {
      rotations_.push_back(random_rotation(d, rot));
      continue;
    }
    const Eigen::MatrixXd g = gaussian(d, d, rot);
    Eigen::MatrixXd k = g - g.transpose();
    const double n = Eigen::JacobiSVD<Eigen::MatrixXd>(k).singularValues()(0);
    k *= cfg_.subject_spread * std::numbers::pi / n;
    rotations_.push_back(to_tensor(k.exp()));
  }
  Rng mix = Rng::stream(seed, "synth.mixing");
  mixing_ = to_tensor(gaussian(cfg_.n_channels, d, mix));
}

double SyntheticGenerator::phase_of(std::size_t ordinal) const {
  const double rep = static_cast<double>(ordinal / cfg_.n_classes);
  return 2.0 * std::numbers::pi * std::fmod(rep * 0.6180339887498949, 1.0);
}

std::vector<double> SyntheticGenerator::latent(std::size_t ordinal, double t) const {
  const std::size_t d = cfg_.latent_dim;
  const std::size_t k = class_of(ordinal);
  const double angle = phase_of(ordinal) + 2.0 * std::numbers::pi * class_rate_hz(k) * t;
  std::vector<double> z(d, 0.0);
  z[(2 * k) % d] = std::cos(angle);
  z[(2 * k + 1) % d] = std::sin(angle);
  return z;
}

std::vector<double> SyntheticGenerator::subject_latent(std::size_t subject, std::size_t ordinal,
                                                       double t) const {
  const auto z = latent(ordinal, t);
  const Tensor& q = rotation(subject);
  const std::size_t d = cfg_.latent_dim;
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += q.at(i, j) * z[j];
  return out;
}

EEGRecording SyntheticGenerator::segment(std::size_t subject, std::size_t ordinal, Rng* noise) const {
  if (subject >= cfg_.n_subjects) throw UsageError("generator: subject out of range");
  const std::size_t c = cfg_.n_channels, d = cfg_.latent_dim;
  EEGRecording rec;
  rec.subject_id = static_cast<std::uint32_t>(subject);
  rec.label = static_cast<std::uint32_t>(class_of(ordinal));
  rec.n_channels = c;
  rec.n_samples = static_cast<std::size_t>(std::floor(cfg_.duration_s * cfg_.rate_hz));
  rec.rate_hz = static_cast<float>(cfg_.rate_hz);
  rec.data.assign(c * rec.n_samples, 0.0f);
  for (std::size_t n = 0; n < rec.n_samples; ++n) {
    const auto y = subject_latent(subject, ordinal, static_cast<double>(n) / cfg_.rate_hz);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double v = 0.0;
      for (std::size_t j = 0; j < d; ++j) v += mixing_.at(ch, j) * y[j];
      rec.data[ch * rec.n_samples + n] = static_cast<float>(v);
    }
  }
  if (cfg_.noise_std > 0.0 && noise != nullptr)
    for (float& v : rec.data) v = static_cast<float>(v + cfg_.noise_std * noise->normal());
  return rec;
}

SegmentSet SyntheticGenerator::generate() const {
  SegmentSet set;
  Rng noise = Rng::stream(seed_, "synth.noise");
  for (std::size_t s = 0; s < cfg_.n_subjects; ++s)
    for (std::size_t i = 0; i < segments_per_subject(); ++i)
      set.segments.push_back(segment(s, i, &noise));
  return set;
}

SegmentSet synthesize(const GeneratorConfig& cfg, std::uint64_t seed) {
  return SyntheticGenerator(cfg, seed).generate();
}

}  // namespace gm
