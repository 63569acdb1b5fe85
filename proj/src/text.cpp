// SPDX-License-Identifier: Apache-2.0
#include "fscap/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace fscap::text {

namespace {

const char* const kReservedTokens[kReservedCount] = {"<pad>", "<bos>", "<eos>", "<unk>", "<cls>"};

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

}  // namespace

Normalized normalize(std::string_view raw, std::size_t max_len) {
  Normalized out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : raw) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.tokens.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  flush();
  if (out.tokens.empty()) {
    out.reason = RejectReason::kEmpty;
  } else if (out.tokens.size() > max_len) {
    out.reason = RejectReason::kTooLong;
    out.tokens.clear();
  }
  return out;
}

std::string join(const Words& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s.push_back(' ');
    s += words[i];
  }
  return s;
}

// ---------------------------------------------------------------------------

Vocab::Vocab() {
  tokens_.assign(std::begin(kReservedTokens), std::end(kReservedTokens));
  index_tokens();
}

void Vocab::index_tokens() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("Vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocab Vocab::build(std::span<const Words> corpus, std::size_t min_count) {
  if (corpus.empty()) throw std::invalid_argument("Vocab::build: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus) {
    for (const auto& w : s) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count && std::find(std::begin(kReservedTokens), std::end(kReservedTokens), w) ==
                              std::end(kReservedTokens)) {
      kept.emplace_back(w, c);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [w, c] : kept) v.tokens_.push_back(w);
  v.index_tokens();
  return v;
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("Vocab::token: id " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSeq Vocab::encode(const Words& words) const {
  TokenSeq out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

Words Vocab::decode(std::span<const int> ids) const {
  Words out;
  for (int i : ids) {
    if (!is_reserved(i)) out.push_back(token(i));
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read file: " + path.string());
  Vocab v;
  v.tokens_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) v.tokens_.push_back(line);
  }
  for (int i = 0; i < kReservedCount; ++i) {
    if (v.tokens_.size() <= static_cast<std::size_t>(i) || v.tokens_[i] != kReservedTokens[i]) {
      throw std::runtime_error(path.string() + ": reserved tokens missing or out of order");
    }
  }
  v.index_tokens();
  return v;
}

// ---------------------------------------------------------------------------

TokenSeq corrupt(std::span<const int> tokens, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("corrupt: drop probability outside [0,1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TokenSeq out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (is_reserved(t)) {
      out.push_back(t);
      continue;
    }
    if (u(rng) >= p) out.push_back(t);
  }
  return out;
}

TokenSeq corrupt(std::span<const int> tokens, const NoiseConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return corrupt(tokens, cfg.drop_prob, rng);
}

// ---------------------------------------------------------------------------

void SynthStyleSpec::validate() const {
  auto require_nonempty = [](const std::vector<std::string>& pool, const char* name) {
    if (pool.empty()) throw std::invalid_argument(std::string("synthesis spec: empty pool ") + name);
  };
  require_nonempty(subjects, "subject");
  require_nonempty(verbs, "verb");
  require_nonempty(preps, "prep");
  require_nonempty(objects, "object");
  if (styles.empty()) throw std::invalid_argument("synthesis spec: no styles");
  if (!(marker_rate >= 0.0 && marker_rate <= 1.0)) throw std::invalid_argument("synthesis spec: marker_rate");
  if (sentences_per_paragraph < 2) throw std::invalid_argument("synthesis spec: sentences_per_paragraph < 2");
  std::set<std::string> seen;
  const std::set<std::string> function_words{"a", "the", "."};
  for (const auto& w : content_words()) {
    if (!seen.insert(w).second) throw std::invalid_argument("synthesis spec: word in two pools: " + w);
  }
  for (const auto& s : styles) {
    if (s.name == "factual") throw std::invalid_argument("synthesis spec: 'factual' is reserved");
    if (s.markers.empty()) throw std::invalid_argument("synthesis spec: style without markers: " + s.name);
    for (const auto& m : s.markers) {
      if (!seen.insert(m).second || function_words.count(m)) {
        throw std::invalid_argument("synthesis spec: marker not disjoint: " + m);
      }
    }
  }
}

std::vector<std::string> SynthStyleSpec::content_words() const {
  std::vector<std::string> out;
  for (const auto* pool : {&subjects, &verbs, &preps, &objects, &attributes}) {
    out.insert(out.end(), pool->begin(), pool->end());
  }
  return out;
}

int SynthStyleSpec::style_index(std::string_view name) const {
  if (name == "factual") return kFactualStyle;
  for (std::size_t i = 0; i < styles.size(); ++i) {
    if (styles[i].name == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown style: " + std::string(name));
}

std::string SynthStyleSpec::style_name(int label) const {
  if (label == kFactualStyle) return "factual";
  if (label < 0 || static_cast<std::size_t>(label) >= styles.size()) {
    throw std::out_of_range("style label " + std::to_string(label));
  }
  return styles[static_cast<std::size_t>(label)].name;
}

SynthStyleSpec SynthStyleSpec::from_keyvalue(const KeyValueFile& kv) {
  SynthStyleSpec s;
  for (const auto& [name, markers] : kv.with_prefix("style.")) {
    s.styles.push_back(StyleLexicon{name, split_list(markers)});
  }
  s.subjects = kv.get_list("pool.subject");
  s.verbs = kv.get_list("pool.verb");
  s.preps = kv.get_list("pool.prep");
  s.objects = kv.get_list("pool.object");
  s.attributes = kv.get_list("pool.attribute");
  s.paragraphs_per_style = static_cast<std::size_t>(kv.get_int("paragraphs_per_style", 100));
  s.factual_paragraphs = static_cast<std::size_t>(kv.get_int("factual_paragraphs", 100));
  s.sentences_per_paragraph = static_cast<std::size_t>(kv.get_int("sentences_per_paragraph", 4));
  s.marker_rate = kv.get_double("marker_rate", 1.0);
  s.second_marker_rate = kv.get_double("second_marker_rate", 0.3);
  s.attribute_rate = kv.get_double("attribute_rate", 0.5);
  s.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  s.validate();
  return s;
}

SynthStyleSpec SynthStyleSpec::load(const std::filesystem::path& path) {
  return from_keyvalue(KeyValueFile::load(path));
}

KeyValueFile SynthStyleSpec::to_keyvalue() const {
  KeyValueFile kv;
  auto join_list = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
  };
  for (const auto& st : styles) kv.set("style." + st.name, join_list(st.markers));
  kv.set("pool.subject", join_list(subjects));
  kv.set("pool.verb", join_list(verbs));
  kv.set("pool.prep", join_list(preps));
  kv.set("pool.object", join_list(objects));
  kv.set("pool.attribute", join_list(attributes));
  kv.set_number("paragraphs_per_style", paragraphs_per_style);
  kv.set_number("factual_paragraphs", factual_paragraphs);
  kv.set_number("sentences_per_paragraph", sentences_per_paragraph);
  kv.set_number("marker_rate", marker_rate);
  kv.set_number("second_marker_rate", second_marker_rate);
  kv.set_number("attribute_rate", attribute_rate);
  kv.set_number("seed", seed);
  return kv;
}

namespace {

template <typename Rng>
const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

}  // namespace

Words gen_factual_sentence(const SynthStyleSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Words w{"a"};
  const bool attr_subject = !spec.attributes.empty() && u(rng) < spec.attribute_rate;
  if (attr_subject) w.push_back(pick(spec.attributes, rng));
  w.push_back(pick(spec.subjects, rng));
  w.push_back(pick(spec.verbs, rng));
  w.push_back(pick(spec.preps, rng));
  w.push_back("the");
  const bool attr_object = !spec.attributes.empty() && u(rng) < spec.attribute_rate;
  if (attr_object) w.push_back(pick(spec.attributes, rng));
  w.push_back(pick(spec.objects, rng));
  w.push_back(".");
  return w;
}

Words stylize(const Words& factual, const SynthStyleSpec& spec, int style, std::mt19937_64& rng) {
  if (style == kFactualStyle) return factual;
  const auto& markers = spec.styles.at(static_cast<std::size_t>(style)).markers;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Words out = factual;
  if (u(rng) >= spec.marker_rate) return out;
  const int count = 1 + (u(rng) < spec.second_marker_rate ? 1 : 0);
  for (int i = 0; i < count; ++i) {
    const std::string& m = pick(markers, rng);
    const bool object_slot = u(rng) < 0.5;
    // Insert right after the determiner of the chosen noun phrase.
    std::size_t pos = 1;
    if (object_slot) {
      auto it = std::find(out.begin(), out.end(), "the");
      pos = it == out.end() ? out.size() - 1 : static_cast<std::size_t>(it - out.begin()) + 1;
    }
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), m);
  }
  return out;
}

std::vector<Paragraph> gen_synthetic_corpus(const SynthStyleSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<Paragraph> out;
  auto make = [&](int style) {
    Paragraph p;
    p.style = style;
    for (std::size_t i = 0; i < spec.sentences_per_paragraph; ++i) {
      p.sentences.push_back(stylize(gen_factual_sentence(spec, rng), spec, style, rng));
    }
    out.push_back(std::move(p));
  };
  for (std::size_t s = 0; s < spec.styles.size(); ++s) {
    for (std::size_t i = 0; i < spec.paragraphs_per_style; ++i) make(static_cast<int>(s));
  }
  for (std::size_t i = 0; i < spec.factual_paragraphs; ++i) make(kFactualStyle);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

int oracle_style(const Words& sentence, const SynthStyleSpec& spec) {
  int best = kFactualStyle;
  std::size_t best_hits = 0;
  for (std::size_t s = 0; s < spec.styles.size(); ++s) {
    std::size_t hits = 0;
    for (const auto& w : sentence) {
      const auto& m = spec.styles[s].markers;
      if (std::find(m.begin(), m.end(), w) != m.end()) ++hits;
    }
    if (hits > best_hits) {
      best_hits = hits;
      best = static_cast<int>(s);
    }
  }
  return best;
}

int oracle_style(std::span<const int> tokens, const Vocab& vocab, const SynthStyleSpec& spec) {
  return oracle_style(vocab.decode(tokens), spec);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> read_paragraph_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read file: " + path.string());
  std::vector<std::vector<std::string>> out(1);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      if (!out.back().empty()) out.emplace_back();
    } else {
      out.back().push_back(line);
    }
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

std::vector<Paragraph> read_corpus(const std::filesystem::path& path, std::size_t max_len) {
  std::vector<Paragraph> out;
  for (const auto& lines : read_paragraph_lines(path)) {
    Paragraph p;
    for (const auto& l : lines) {
      auto n = normalize(l, max_len);
      if (n.ok()) p.sentences.push_back(std::move(n.tokens));
    }
    if (!p.sentences.empty()) out.push_back(std::move(p));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Paragraph> paragraphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (i) out << '\n';
    for (const auto& s : paragraphs[i].sentences) out << join(s) << '\n';
  }
}

std::vector<Words> read_sentences(const std::filesystem::path& path, std::size_t max_len) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read file: " + path.string());
  std::vector<Words> out;
  std::string line;
  while (std::getline(in, line)) {
    auto n = normalize(line, max_len);
    if (n.ok()) out.push_back(std::move(n.tokens));
  }
  return out;
}

void write_sentences(const std::filesystem::path& path, std::span<const Words> sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  for (const auto& s : sentences) out << join(s) << '\n';
}

}  // namespace fscap::text
