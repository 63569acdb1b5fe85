// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion: normalization, vocabulary, adjacent-sentence pairing,
// token-drop noise, and the synthetic multi-style corpus generator with its
// lexicon-based ground-truth style oracle.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fscap/keyvalue.hpp"

namespace fscap::text {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kCls = 4;
inline constexpr int kReservedCount = 5;
inline constexpr std::size_t kDefaultMaxLen = 32;

using Words = std::vector<std::string>;
/// Vocabulary ids of one normalized sentence, without BOS/EOS.
using TokenSeq = std::vector<int>;

inline bool is_reserved(int id) { return id >= 0 && id < kReservedCount; }

enum class RejectReason { kNone, kEmpty, kTooLong };

struct Normalized {
  Words tokens;
  RejectReason reason = RejectReason::kNone;
  bool ok() const { return reason == RejectReason::kNone; }
};

/// Lowercase, split on whitespace, and split every ASCII punctuation
/// character into its own token. Rejects empty results and sentences longer
/// than max_len tokens.
Normalized normalize(std::string_view raw, std::size_t max_len = kDefaultMaxLen);
std::string join(const Words& words);

class Vocab {
 public:
  /// Vocabulary holding only the reserved tokens.
  Vocab();

  /// Tokens seen fewer than min_count times are left out (and so map to UNK).
  /// Token ids after the reserved block follow descending frequency, then
  /// lexicographic order. Throws std::invalid_argument on an empty corpus.
  static Vocab build(std::span<const Words> corpus, std::size_t min_count = 1);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;

  TokenSeq encode(const Words& words) const;
  /// Drops reserved ids.
  Words decode(std::span<const int> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void index_tokens();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// A document: consecutive sentences assumed to share one style.
struct Paragraph {
  std::vector<Words> sentences;
  int style = -1;  // generation label, hidden from training; -1 = factual/unknown
};

/// The n-1 ordered (previous, current) pairs of a sentence list.
template <typename S>
std::vector<std::pair<S, S>> adjacent_pairs(const std::vector<S>& sentences) {
  std::vector<std::pair<S, S>> out;
  for (std::size_t i = 1; i < sentences.size(); ++i) out.emplace_back(sentences[i - 1], sentences[i]);
  return out;
}

struct NoiseConfig {
  double drop_prob = 0.4;
  std::uint64_t seed = 0;
};

/// Drops each non-reserved token independently with probability p, one
/// uniform draw per non-reserved token in order. Survivor order is kept.
TokenSeq corrupt(std::span<const int> tokens, double p, std::mt19937_64& rng);
TokenSeq corrupt(std::span<const int> tokens, const NoiseConfig& cfg);

// ---------------------------------------------------------------------------
// Synthetic styled corpus

inline constexpr int kFactualStyle = -1;

struct StyleLexicon {
  std::string name;
  std::vector<std::string> markers;
};

/// Sentences follow "a [attr] subject verb prep the [attr] object ." with
/// style markers inserted as adjectives in front of either noun.
struct SynthStyleSpec {
  std::vector<StyleLexicon> styles;  // list order is the oracle tie-break order
  std::vector<std::string> subjects;
  std::vector<std::string> verbs;
  std::vector<std::string> preps;
  std::vector<std::string> objects;
  std::vector<std::string> attributes;
  std::size_t paragraphs_per_style = 100;
  std::size_t factual_paragraphs = 100;
  std::size_t sentences_per_paragraph = 4;
  double marker_rate = 1.0;        // chance a styled sentence carries markers
  double second_marker_rate = 0.3; // chance of a second marker given the first
  double attribute_rate = 0.5;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when lexicons overlap each other or the
  /// content pools, or when a pool is empty.
  void validate() const;
  std::vector<std::string> content_words() const;
  int style_index(std::string_view name) const;  // kFactualStyle for "factual"
  std::string style_name(int label) const;

  static SynthStyleSpec from_keyvalue(const KeyValueFile& kv);
  static SynthStyleSpec load(const std::filesystem::path& path);
  KeyValueFile to_keyvalue() const;
};

/// One factual sentence drawn from the content grammar.
Words gen_factual_sentence(const SynthStyleSpec& spec, std::mt19937_64& rng);
/// Insert markers of `style` into a factual sentence (no-op for factual).
Words stylize(const Words& factual, const SynthStyleSpec& spec, int style, std::mt19937_64& rng);

/// paragraphs_per_style paragraphs for each style plus factual_paragraphs
/// marker-free ones, deterministically shuffled.
std::vector<Paragraph> gen_synthetic_corpus(const SynthStyleSpec& spec, std::uint64_t seed);

/// argmax over styles of lexicon hits; kFactualStyle when there are none;
/// ties go to the lower style index.
int oracle_style(const Words& sentence, const SynthStyleSpec& spec);
int oracle_style(std::span<const int> tokens, const Vocab& vocab, const SynthStyleSpec& spec);

// ---------------------------------------------------------------------------
// Corpus files: one sentence per line, blank line between paragraphs.

std::vector<std::vector<std::string>> read_paragraph_lines(const std::filesystem::path& path);
std::vector<Paragraph> read_corpus(const std::filesystem::path& path, std::size_t max_len = kDefaultMaxLen);
void write_corpus(const std::filesystem::path& path, std::span<const Paragraph> paragraphs);
/// One normalized sentence per line; lines failing normalization are skipped.
std::vector<Words> read_sentences(const std::filesystem::path& path, std::size_t max_len = kDefaultMaxLen);
void write_sentences(const std::filesystem::path& path, std::span<const Words> sentences);

}  // namespace fscap::text
