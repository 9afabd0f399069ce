// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "geomanifold/config.hpp"
#include "geomanifold/losses.hpp"
#include "geomanifold/training.hpp"

namespace gm {

struct CommandArgs {
  std::string command;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> weights;
  std::optional<std::filesystem::path> out;
  /// align only: embeddings the source cloud is mapped onto.
  std::optional<std::filesystem::path> target;
  std::vector<std::string> ablate;
};

/// Loads the config, applies --seed and --ablate.
TrainConfig resolve_config(const CommandArgs& args);

void cmd_gen(const CommandArgs& args, std::ostream& log);
void cmd_prep(const CommandArgs& args, std::ostream& log);
void cmd_pretrain(const CommandArgs& args, std::ostream& log);
void cmd_train(const CommandArgs& args, std::ostream& log);
void cmd_finetune(const CommandArgs& args, std::ostream& log);
CrossValidation cmd_eval(const CommandArgs& args, std::ostream& log);
void cmd_embed(const CommandArgs& args, std::ostream& log);

struct AlignReport {
  AlignmentMap map;
  double mean_distance_before = 0.0;
  double mean_distance_after = 0.0;
  double reduction = 0.0;  // fraction of the initial mean distance removed
  double det = 1.0;
};
AlignReport cmd_align(const CommandArgs& args, std::ostream& log);

/// Runs args.command, printing errors to err. Returns the process exit code:
/// 0 success, 1 usage, 2 data/format/io, 3 numerical.
int run_command(const CommandArgs& args, std::ostream& log, std::ostream& err);

/// Preprocessing pipeline: resample, bandpass, re-reference, segment.
SegmentSet preprocess(std::span<const EEGRecording> recs, const PrepConfig& prep);

/// Embedding CSV: segment,subject,label,patch,z0..z{d-1}.
void write_embeddings(const std::filesystem::path& path, std::span<const EEGRecording* const> segs,
                      const Tensor& latents, std::size_t tokens_per_segment);
Tensor read_embeddings(const std::filesystem::path& path);
void write_alignment(const std::filesystem::path& path, const AlignmentMap& map);
AlignmentMap read_alignment(const std::filesystem::path& path);

/// A new model built from cfg holding src's parameter values. Throws
/// UsageError when cfg describes a different architecture.
std::unique_ptr<Model> rebuild(const Model& src, TrainConfig cfg);

}  // namespace gm
