// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>
#include <utility>

#include "commands.hpp"

namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  using fscap::cli::Options;
  Options opt;
  CLI::App app{"Few-shot stylized captioning at desk scale"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Run configuration file");
    sub->add_option("--seed", opt.seed, "Seed overriding every component seed");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
  };
  auto needs_config = [&](CLI::App* sub) { sub->get_option("--config")->required(); };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus and vision splits");
  common(gen);
  needs_config(gen);

  const std::pair<const char*, const char*> trainers[] = {
      {"train-discriminator", "Pre-train the style discriminator"},
      {"train-stage1", "Text-only training of the encoders and decoder"},
      {"train-stage2", "Train the visual projection with the text task"}};
  for (const auto& [name, help] : trainers) {
    auto* sub = app.add_subcommand(name, help);
    common(sub);
    needs_config(sub);
    sub->add_option("--checkpoint", opt.checkpoint, "Starting checkpoint");
  }

  auto* cap = app.add_subcommand("caption", "Caption visual features in a few-shot style");
  auto* tr = app.add_subcommand("transfer", "Transfer sentences into a few-shot style");
  cap->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default <out>/checkpoints/stage2)");
  tr->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default <out>/checkpoints/stage1)");
  for (auto* sub : {cap, tr}) {
    common(sub);
    sub->add_option("--examples", opt.examples, "Example sentences of the target style")->required();
    sub->add_option("--lambda", opt.lambda, "Delta-rule scale");
    sub->add_option("--refs", opt.refs, "Factual reference sentences (default <out>/data/factual_ref.txt)");
  }
  cap->add_option("--input", opt.input, "Vision split prefix, e.g. run/data/vision/test")->required();
  tr->add_option("--input", opt.input, "Sentences, one per line")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  common(ev);
  needs_config(ev);
  ev->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default <out>/checkpoints/stage2)");
  ev->add_option("--lambda", opt.lambda, "Single delta-rule scale");
  ev->add_option("--scan-lambda", opt.scan_lambda, "Integer range A..B");
  ev->add_option("--split", opt.split, "val or test")->check(CLI::IsMember({"val", "test"}));
  ev->add_option("--task", opt.task, "caption or transfer")->check(CLI::IsMember({"caption", "transfer"}));

  auto* ab = app.add_subcommand("ablate", "Train and evaluate one ablation row");
  common(ab);
  needs_config(ab);
  ab->add_option("--ablate", opt.ablate, "dr, nbt, style, v2l or multitask")
      ->required()
      ->check(CLI::IsMember({"dr", "nbt", "style", "v2l", "multitask"}));
  ab->add_option("--scan-lambda", opt.scan_lambda, "Integer range A..B");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  common(gc);

  auto* viz = app.add_subcommand("embed-viz", "Style vectors of held-out sentences in 2D");
  common(viz);
  needs_config(viz);
  viz->add_option("--checkpoint", opt.checkpoint, "Checkpoint (default <out>/checkpoints/stage1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "fscap: error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }
  for (auto* sub : app.get_subcommands()) opt.command = sub->get_name();

  try {
    fscap::cli::run(opt);
  } catch (const std::exception& e) {
    std::cerr << "fscap: error: " << opt.command << ": " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
