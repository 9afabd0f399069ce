// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "geomanifold/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Manifold-constrained signal model: data generation, preprocessing, training, "
               "evaluation and alignment"};
  app.require_subcommand(1, 1);

  gm::CommandArgs args;
  std::string ablate;
  std::string config, data, weights, out, target;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "config file (key = value lines)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--data", data, "input EEGB file (align: source embeddings CSV)");
    sub->add_option("--weights", weights, "input weights file");
    sub->add_option("--out", out, "output path");
    sub->add_option("--ablate", ablate, "comma separated ablation flags");
  };
  const char* names[] = {"gen", "prep", "pretrain", "train", "finetune", "eval", "embed", "align"};
  const char* help[] = {"write a synthetic data set",
                        "resample, filter, re-reference and segment recordings",
                        "stage 1: train the variational autoencoder",
                        "stage 2: train the transformer and dynamics predictor",
                        "stage 3: fine-tune end to end with a classification head",
                        "subject-independent cross-validation",
                        "export latents and reconstructions as CSV",
                        "Procrustes-align two embedding sets"};
  for (int i = 0; i < 8; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    common(sub);
    if (std::string(names[i]) == "align")
      sub->add_option("--target", target, "target embeddings CSV")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  args.command = sub->get_name();
  args.config = config;
  if (sub->count("--seed")) args.seed = seed;
  if (!data.empty()) args.data = data;
  if (!weights.empty()) args.weights = weights;
  if (!out.empty()) args.out = out;
  if (!target.empty()) args.target = target;
  std::stringstream ss(ablate);
  for (std::string flag; std::getline(ss, flag, ',');)
    if (!flag.empty()) args.ablate.push_back(flag);
  return gm::run_command(args, std::cout, std::cerr);
}
