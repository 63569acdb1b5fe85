// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale evaluation metrics and report assembly.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fscap/inference.hpp"
#include "fscap/model.hpp"
#include "fscap/text.hpp"
#include "fscap/visual.hpp"

namespace fscap {

/// Fraction of sentences whose oracle label equals `target`. 0 for an empty
/// set.
double style_accuracy(std::span<const text::Words> sentences, int target, const text::SynthStyleSpec& spec);

/// Sentence BLEU with n = 1..3, uniform weights and brevity penalty against
/// the closest reference length. An order with no candidate n-grams gets
/// add-1 smoothing on its precision; an order with zero matches gives 0.
double bleu3(const text::Words& candidate, std::span<const text::Words> references);

/// Corpus BLEU-3: clipped counts and lengths summed over all items first.
double corpus_bleu3(std::span<const text::Words> candidates, std::span<const std::vector<text::Words>> references);

/// sqrt(a * b). Throws std::invalid_argument on a negative factor.
double geomean(double a, double b);

/// Cosine of meanpool E_c(project(x)) and meanpool E_c(caption).
template <typename T>
double content_score(const StyleCapModel<T>& model, std::span<const int> caption, const VisualFeature& x);

/// Cosine c mapped to 100 * (c + 1) / 2.
double content_percent(double cosine);

/// Additive-alpha n-gram model over ids [0, vocab_size). Each sentence is
/// scored with n-1 BOS tokens of left context and a final EOS.
class NgramLM {
 public:
  NgramLM(std::size_t order, double alpha, std::size_t vocab_size);

  void add(std::span<const int> sentence);
  /// p(w | last order-1 tokens of context).
  double prob(std::span<const int> context, int w) const;
  double log_prob_sentence(std::span<const int> sentence) const;
  /// exp(-(1/K) sum log p) over every scored token (EOS included).
  double perplexity(std::span<const text::TokenSeq> sentences) const;

  std::size_t order() const { return order_; }
  std::size_t vocab_size() const { return vocab_; }

 private:
  std::vector<int> key(std::span<const int> context) const;

  std::size_t order_;
  double alpha_;
  std::size_t vocab_;
  std::map<std::vector<int>, std::map<int, double>> counts_;
  std::map<std::vector<int>, double> totals_;
};

NgramLM train_ngram_lm(std::span<const text::TokenSeq> corpus, std::size_t order, double alpha,
                       std::size_t vocab_size);

/// Mean-centered projection onto the two leading principal directions. Each
/// direction's sign is fixed so its largest-magnitude component is positive.
std::vector<std::pair<double, double>> pca2d(std::span<const std::vector<double>> vectors);

struct ProbeResult {
  double accuracy = 0.0;
  std::size_t train = 0;
  std::size_t test = 0;
};

/// Multinomial logistic regression on standardized features, trained by
/// full-batch gradient descent on a seeded train split; returns held-out
/// accuracy.
ProbeResult linear_probe(std::span<const std::vector<double>> vectors, std::span<const int> labels,
                         double train_fraction = 0.5, std::uint64_t seed = 0, std::size_t iterations = 500);

// ---------------------------------------------------------------------------
// Reports

struct EvalRow {
  std::string style;   // target style name, "factual", or "all" for the macro row
  std::string data;    // evaluation split name
  double lambda = 0.0;
  double bleu3 = 0.0;    // corpus BLEU-3 against the factual reference, in [0, 1]
  double content = 0.0;  // mean content score on [0, 100]
  double sacc = 0.0;     // in [0, 1]
  double gm1 = 0.0;      // geomean(100 sACC, 100 BLEU-3)
  double gm2 = 0.0;      // geomean(100 sACC, content)
  double ppl = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;      // one macro row per lambda
  std::vector<EvalRow> details;   // per style and lambda, plus the factual row
  double best_lambda = 0.0;       // highest macro GM1
};

struct EvalInputs {
  std::span<const VisionItem> test;
  std::map<int, std::vector<text::TokenSeq>> examples;  // style index -> example sentences
  std::span<const text::TokenSeq> factual_refs;
  const text::SynthStyleSpec* spec = nullptr;
  const text::Vocab* vocab = nullptr;
  const NgramLM* lm = nullptr;
  std::string data = "test";
};

/// Captions every test item once with s_src (the factual row) and once per
/// style and lambda with the delta rule, then scores them.
EvalReport evaluate(const StyleCapModel<float>& model, const EvalInputs& in, std::span<const double> lambdas);

void write_report_tsv(std::ostream& out, std::span<const EvalRow> rows);
/// Key-value summary with the macro rows and the selected lambda.
KeyValueFile report_summary(const EvalReport& report);

struct TransferResult {
  double style_accuracy = 0.0;
  double content_retention = 0.0;  // preserved / source content words, micro-averaged
  std::size_t count = 0;
  std::vector<text::Words> outputs;
};

/// Transfers each sentence to every style other than its own oracle label
/// (s = delta rule from that style's examples) and scores the outputs.
TransferResult evaluate_transfer(const StyleCapModel<float>& model, std::span<const text::TokenSeq> sentences,
                                 const std::map<int, std::vector<text::TokenSeq>>& examples,
                                 std::span<const text::TokenSeq> factual_refs, double lambda,
                                 const text::SynthStyleSpec& spec, const text::Vocab& vocab);

/// Fraction of the source's content-word tokens (multiset) present in the
/// output.
std::pair<std::size_t, std::size_t> content_overlap(const text::Words& source, const text::Words& output,
                                                    const text::SynthStyleSpec& spec);

}  // namespace fscap
