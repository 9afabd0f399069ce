// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "geomanifold/rng.hpp"
#include "geomanifold/signal.hpp"
#include "geomanifold/tensor.hpp"

namespace gm {

struct GeneratorConfig {
  std::size_t n_subjects = 4;
  std::size_t n_classes = 2;
  std::size_t segments_per_class = 50;
  std::size_t n_channels = 16;
  std::size_t latent_dim = 8;
  double duration_s = 4.0;
  double rate_hz = 200.0;
  double noise_std = 0.1;
  /// Class k rotates at (k + 1) * base_rate_hz.
  double base_rate_hz = 1.0;
  /// 1 draws each subject's rotation from the Haar measure; smaller values
  /// draw exp(spread * pi * K) for a random unit skew generator K.
  double subject_spread = 1.0;

  void validate() const;
};

/// Latent trajectories are great circles on S^{d-1}: class k rotates in the
/// coordinate plane (2k, 2k+1) mod d. Subject s sees Q_s z(t), mixed to
/// channels by a shared matrix A, plus white noise.
///
/// Segment ordinal i of every subject has class i % n_classes and repetition
/// i / n_classes; the starting phase depends on the repetition only, so the
/// same ordinal in two subjects differs by Q_s alone.
class SyntheticGenerator {
 public:
  SyntheticGenerator(GeneratorConfig cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  std::size_t segments_per_subject() const { return cfg_.n_classes * cfg_.segments_per_class; }
  std::size_t class_of(std::size_t ordinal) const { return ordinal % cfg_.n_classes; }
  double phase_of(std::size_t ordinal) const;
  double class_rate_hz(std::size_t cls) const { return (cls + 1) * cfg_.base_rate_hz; }

  /// Unrotated latent of an ordinal at time t (seconds from segment start).
  std::vector<double> latent(std::size_t ordinal, double t) const;
  /// Q_s applied to latent().
  std::vector<double> subject_latent(std::size_t subject, std::size_t ordinal, double t) const;
  const Tensor& rotation(std::size_t subject) const { return rotations_.at(subject); }
  const Tensor& mixing() const { return mixing_; }

  /// One segment; noise drawn from `noise` when noise_std > 0.
  EEGRecording segment(std::size_t subject, std::size_t ordinal, Rng* noise) const;
  /// Every subject's segments, subject-major, with a fresh noise stream.
  SegmentSet generate() const;

 private:
  GeneratorConfig cfg_;
  std::uint64_t seed_;
  std::vector<Tensor> rotations_;  // d x d
  Tensor mixing_;                  // C x d
};

SegmentSet synthesize(const GeneratorConfig& cfg, std::uint64_t seed);

/// Haar-distributed d x d rotation (det +1).
Tensor random_rotation(std::size_t d, Rng& rng);

}  // namespace gm
