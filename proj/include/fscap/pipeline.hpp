// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration shared by the command-line tool and the
// acceptance suite: configuration, dataset generation and loading, the
// training stages, and the evaluation drivers.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fscap/checkpoint.hpp"
#include "fscap/discriminator.hpp"
#include "fscap/evaluation.hpp"
#include "fscap/keyvalue.hpp"
#include "fscap/model.hpp"
#include "fscap/text.hpp"
#include "fscap/training.hpp"
#include "fscap/visual.hpp"

namespace fscap {

struct DataConfig {
  std::size_t test_paragraphs_per_style = 150;
  std::size_t test_factual_paragraphs = 50;
  std::size_t example_pool = 100;     // example sentences per style
  std::size_t factual_refs = 100;     // factual sentences used for s_src
  std::size_t vision_train = 2000;
  std::size_t vision_val = 200;
  std::size_t vision_test = 200;
  std::size_t frames = 2;
  double sigma_train = 0.1;
  double sigma_eval = 0.0;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  std::size_t examples = 5;            // example sentences per target style
  std::vector<double> lambdas = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double transfer_lambda = 1.0;
  std::size_t transfer_per_style = 100;
  std::size_t probe_per_style = 500;
  std::size_t lm_order = 3;
  double lm_alpha = 0.1;
  std::uint64_t seed = 0;
};

struct RunConfig {
  KeyValueFile kv;  // effective configuration after overrides
  std::filesystem::path base_dir;  // relative paths in kv resolve against this
  text::SynthStyleSpec spec;
  Architecture arch;
  DiscriminatorTrainConfig disc;
  Stage1Config stage1;
  Stage2Config stage2;
  DataConfig data;
  EvalConfig eval;

  /// Reads the key-value file; data.spec is resolved against the config's
  /// directory. A seed override replaces every component seed.
  static RunConfig load(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt);
  static RunConfig from_keyvalue(const KeyValueFile& kv, const std::filesystem::path& base_dir,
                                 std::optional<std::uint64_t> seed = std::nullopt);
};

/// "A..B" -> A, A+1, ..., B. Throws std::invalid_argument on bad syntax.
std::vector<double> parse_lambda_range(std::string_view text);

// ---------------------------------------------------------------------------
// Data

struct DataSet {
  text::SynthStyleSpec spec;
  text::Vocab vocab;
  std::vector<text::Paragraph> train;
  std::vector<text::Paragraph> test;
  Corpus train_ids;
  std::vector<VisionItem> vision_train, vision_val, vision_test;
  std::vector<text::TokenSeq> factual_refs;
  std::map<int, std::vector<text::TokenSeq>> example_pool;  // style index -> encoded sentences

  static DataSet load(const std::filesystem::path& dir);
};

/// Writes the styled corpus splits, the vision splits, the factual reference
/// set, one example file per style, vocab.txt and synth_spec.txt to `dir`.
void generate_data(const RunConfig& cfg, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Training

/// Fresh model sized to the dataset vocabulary.
Checkpoint initial_checkpoint(const RunConfig& cfg, const DataSet& data);

void run_discriminator(Checkpoint& ckpt, const RunConfig& cfg, const DataSet& data, std::ostream* log);
void run_stage1(Checkpoint& ckpt, const RunConfig& cfg, const DataSet& data, std::ostream* log);
void run_stage2(Checkpoint& ckpt, const RunConfig& cfg, const DataSet& data, std::ostream* log);

// ---------------------------------------------------------------------------
// Evaluation

/// First `cfg.examples` sentences of each style's pool.
std::map<int, std::vector<text::TokenSeq>> select_examples(const DataSet& data, std::size_t per_style);

EvalReport run_caption_eval(const StyleCapModel<float>& model, const RunConfig& cfg, const DataSet& data,
                            std::span<const VisionItem> items, std::span<const double> lambdas,
                            const std::string& split_name);

/// The first transfer_per_style test sentences of each style, transferred
/// to every other style.
TransferResult run_transfer_eval(const StyleCapModel<float>& model, const RunConfig& cfg, const DataSet& data);

struct ProbeReport {
  double accuracy = 0.0;
  double shuffled_accuracy = 0.0;
  std::vector<std::pair<double, double>> coords;
  std::vector<int> labels;
};

/// Style vectors of probe_per_style held-out sentences per style: linear
/// probe, label-shuffled probe, and the 2D projection.
ProbeReport run_probe(const StyleCapModel<float>& model, const RunConfig& cfg, const DataSet& data);

}  // namespace fscap
