// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "geomanifold/losses.hpp"
#include "geomanifold/metrics.hpp"
#include "geomanifold/model.hpp"
#include "geomanifold/signal.hpp"

namespace gm {

using SegmentRefs = std::vector<const EEGRecording*>;
SegmentRefs refs(const std::vector<EEGRecording>& segs);

/// Mean loss components over one epoch. Components that do not apply to a
/// stage are 0.
struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double recon = 0.0;
  double geo = 0.0;
  double align = 0.0;
  double dynamics = 0.0;
  double ce = 0.0;
};
using EpochCallback = std::function<void(const EpochLog&)>;

/// Stage 1: VAE on reconstruction + KL + alpha * geo.
std::vector<EpochLog> pretrain(Model& model, std::span<const EEGRecording* const> data,
                               const EpochCallback& on_epoch = {});
/// Stage 2: encoder frozen; decoder, transformer and dynamics on
/// recon + alpha * geo + beta * align + next-latent loss.
std::vector<EpochLog> train_transformer(Model& model, std::span<const EEGRecording* const> data,
                                        const EpochCallback& on_epoch = {});
/// Stage 3: everything trainable; cross-entropy + beta * align. Unless
/// Procrustes is disabled, each subject's latents are first rotated into the
/// shared calibration frame, refreshed every epoch.
std::vector<EpochLog> finetune(Model& model, std::span<const EEGRecording* const> data,
                               const EpochCallback& on_epoch = {});

void write_epoch_csv(const std::filesystem::path& path, std::span<const EpochLog> logs);

/// Deterministic latents project(mu), segment-major: row i * P + p.
Tensor encode_latents(const Model& model, std::span<const EEGRecording* const> segs);
/// Decoded segments (C x T each) from deterministic latents.
std::vector<Tensor> reconstruct(const Model& model, std::span<const EEGRecording* const> segs);
/// Class predictions; map (if given) is applied to the latents first.
std::vector<std::size_t> predict(const Model& model, std::span<const EEGRecording* const> segs,
                                 const AlignmentMap* map = nullptr);

std::size_t infer_class_count(std::span<const EEGRecording* const> segs);
/// Copies cfg and fills its shape from the data.
TrainConfig with_shape(TrainConfig cfg, std::span<const EEGRecording* const> segs,
                       std::size_t n_classes);

/// Per-subject maps into the shared calibration frame.
using SubjectMaps = std::map<std::uint32_t, AlignmentMap>;

/// The first eval.calibration_segments segments of every subject that has
/// that many, encoded, rotated onto a common frame and averaged.
Tensor calibration_reference(const Model& model, std::span<const EEGRecording* const> segs);
/// Kabsch map of each subject's calibration latents onto reference.
SubjectMaps calibrate_subjects(const Model& model, std::span<const EEGRecording* const> segs,
                               const Tensor& reference);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::uint32_t> test_subjects;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double kappa = 0.0;
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  Summary accuracy;
  Summary kappa;
};

struct CrossValidationOptions {
  /// Evaluate only the first max_folds folds (0 = all).
  std::size_t max_folds = 0;
  std::function<void(std::size_t fold, Stage stage, const EpochLog&)> on_epoch;
};

/// Subject-independent k-fold evaluation (k = cfg.eval.folds): every fold
/// trains all three stages on the remaining subjects, aligns each held-out
/// subject to the training latents through its calibration segments, and
/// scores the rest.
CrossValidation cross_validate(const TrainConfig& cfg, const SegmentSet& data,
                               const CrossValidationOptions& opts = {});

/// Accuracy and kappa of a trained model on held-out subjects, with the
/// Procrustes calibration described above.
FoldResult evaluate_held_out(const Model& model, std::span<const EEGRecording* const> train,
                             std::span<const EEGRecording* const> test);

}  // namespace gm
