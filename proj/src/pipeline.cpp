// SPDX-License-Identifier: Apache-2.0
#include "fscap/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>
#include <random>
#include <stdexcept>

#include "fscap/inference.hpp"

namespace fscap {

namespace {

std::size_t get_size(const KeyValueFile& kv, std::string_view key, std::size_t fallback) {
  const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw std::invalid_argument(std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

const char* const kSeedKeys[] = {"model.seed", "disc_train.seed", "stage1.seed", "stage2.seed", "data.seed",
                                 "eval.seed"};

}  // namespace

std::vector<double> parse_lambda_range(std::string_view text) {
  const auto dots = text.find("..");
  auto parse = [&](std::string_view s) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("bad lambda range: " + std::string(text));
    return v;
  };
  if (dots == std::string_view::npos) throw std::invalid_argument("bad lambda range: " + std::string(text));
  const long a = parse(text.substr(0, dots)), b = parse(text.substr(dots + 2));
  if (b < a) throw std::invalid_argument("bad lambda range: " + std::string(text));
  std::vector<double> out;
  for (long v = a; v <= b; ++v) out.push_back(static_cast<double>(v));
  return out;
}

RunConfig RunConfig::load(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
  return from_keyvalue(KeyValueFile::load(path), path.parent_path(), seed);
}

RunConfig RunConfig::from_keyvalue(const KeyValueFile& source, const std::filesystem::path& base_dir,
                                   std::optional<std::uint64_t> seed) {
  RunConfig c;
  c.kv = source;
  c.base_dir = base_dir;
  if (seed) {
    c.kv.set_number("seed", *seed);
    for (const char* k : kSeedKeys) c.kv.set_number(k, *seed);
  }
  const auto& kv = c.kv;
  const auto base_seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  auto seed_of = [&](const char* key) { return static_cast<std::uint64_t>(kv.get_int(key, static_cast<std::int64_t>(base_seed))); };

  const auto spec_path = kv.get_or("data.spec", "");
  if (spec_path.empty()) throw std::invalid_argument("config: data.spec is required");
  const auto resolved = std::filesystem::path(spec_path).is_absolute() ? std::filesystem::path(spec_path) : base_dir / spec_path;
  c.spec = text::SynthStyleSpec::load(resolved);
  c.spec.seed = seed_of("data.seed");
  c.spec.paragraphs_per_style = get_size(kv, "data.paragraphs_per_style", c.spec.paragraphs_per_style);
  c.spec.factual_paragraphs = get_size(kv, "data.factual_paragraphs", c.spec.factual_paragraphs);
  c.spec.validate();

  KeyValueFile arch_kv = kv;
  if (!arch_kv.has("model.seed")) arch_kv.set_number("model.seed", base_seed);
  c.arch = Architecture::from_keyvalue(arch_kv);

  c.disc.epochs = get_size(kv, "disc_train.epochs", c.disc.epochs);
  c.disc.batch_size = get_size(kv, "disc_train.batch_size", c.disc.batch_size);
  c.disc.lr = kv.get_double("disc_train.lr", c.disc.lr);
  c.disc.seed = seed_of("disc_train.seed");

  KeyValueFile stage_kv = kv;
  if (!stage_kv.has("stage1.seed")) stage_kv.set_number("stage1.seed", base_seed);
  if (!stage_kv.has("stage2.seed")) stage_kv.set_number("stage2.seed", base_seed);
  c.stage1 = Stage1Config::from_keyvalue(stage_kv);
  c.stage2 = Stage2Config::from_keyvalue(stage_kv);

  auto& d = c.data;
  d.test_paragraphs_per_style = get_size(kv, "data.test_paragraphs_per_style", d.test_paragraphs_per_style);
  d.test_factual_paragraphs = get_size(kv, "data.test_factual_paragraphs", d.test_factual_paragraphs);
  d.example_pool = get_size(kv, "data.example_pool", d.example_pool);
  d.factual_refs = get_size(kv, "data.factual_refs", d.factual_refs);
  d.vision_train = get_size(kv, "data.vision_train", d.vision_train);
  d.vision_val = get_size(kv, "data.vision_val", d.vision_val);
  d.vision_test = get_size(kv, "data.vision_test", d.vision_test);
  d.frames = get_size(kv, "data.frames", c.arch.projection.max_frames);
  d.sigma_train = kv.get_double("data.sigma_train", d.sigma_train);
  d.sigma_eval = kv.get_double("data.sigma_eval", d.sigma_eval);
  d.seed = seed_of("data.seed");
  if (d.frames == 0 || d.frames > c.arch.projection.max_frames)
    throw std::invalid_argument("data.frames must be in [1, proj.max_frames]");

  auto& e = c.eval;
  e.examples = get_size(kv, "eval.examples", e.examples);
  if (kv.has("eval.lambdas")) {
    e.lambdas.clear();
    for (const auto& s : kv.get_list("eval.lambdas")) e.lambdas.push_back(std::stod(s));
  }
  e.transfer_lambda = kv.get_double("eval.transfer_lambda", e.transfer_lambda);
  e.transfer_per_style = get_size(kv, "eval.transfer_per_style", e.transfer_per_style);
  e.probe_per_style = get_size(kv, "eval.probe_per_style", e.probe_per_style);
  e.lm_order = get_size(kv, "eval.lm_order", e.lm_order);
  e.lm_alpha = kv.get_double("eval.lm_alpha", e.lm_alpha);
  e.seed = seed_of("eval.seed");
  if (e.examples == 0) throw std::invalid_argument("eval.examples must be >= 1");
  return c;
}

// ---------------------------------------------------------------------------
// Data

namespace {

std::vector<text::Words> make_captions(const text::SynthStyleSpec& spec, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<text::Words> out(n);
  for (auto& c : out) c = text::gen_factual_sentence(spec, rng);
  return out;
}

std::vector<VisionItem> make_vision(std::vector<text::Words> captions, const text::Vocab& vocab,
                                    const VisualBasis& basis, double sigma, std::size_t frames,
                                    const std::string& prefix, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<VisionItem> out;
  out.reserve(captions.size());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    auto feature = synth_visual(vocab.encode(captions[i]), basis, sigma, frames, rng);
    out.push_back({prefix + std::to_string(i), std::move(captions[i]), std::move(feature)});
  }
  return out;
}

std::vector<text::Words> sentences_of(std::span<const text::Paragraph> ps, int style) {
  std::vector<text::Words> out;
  for (const auto& p : ps) {
    if (p.style != style) continue;
    out.insert(out.end(), p.sentences.begin(), p.sentences.end());
  }
  return out;
}

std::filesystem::path example_file(const std::filesystem::path& dir, const std::string& style) {
  return dir / ("examples_" + style + ".txt");
}

}  // namespace

void generate_data(const RunConfig& cfg, const std::filesystem::path& dir) {
  const auto& spec = cfg.spec;
  const auto& d = cfg.data;
  std::filesystem::create_directories(dir);

  const auto train = text::gen_synthetic_corpus(spec, d.seed);

  auto test_spec = spec;
  test_spec.paragraphs_per_style = d.test_paragraphs_per_style;
  test_spec.factual_paragraphs = d.test_factual_paragraphs;
  const auto test = text::gen_synthetic_corpus(test_spec, d.seed + 1);

  auto pool_spec = spec;
  const std::size_t per = spec.sentences_per_paragraph;
  pool_spec.paragraphs_per_style = (d.example_pool + per - 1) / per;
  pool_spec.factual_paragraphs = (d.factual_refs + per - 1) / per;
  const auto pool = text::gen_synthetic_corpus(pool_spec, d.seed + 2);

  const auto ctrain = make_captions(spec, d.vision_train, d.seed + 3);
  std::vector<text::Words> vocab_text = ctrain;
  for (const auto& p : train) vocab_text.insert(vocab_text.end(), p.sentences.begin(), p.sentences.end());
  const auto vocab = text::Vocab::build(vocab_text);
  const auto content = spec.content_words();
  const auto basis = VisualBasis::make(cfg.arch.projection.visual_dim, vocab, content, d.seed + 6);

  const auto vtrain = make_vision(ctrain, vocab, basis, d.sigma_train, d.frames, "train", d.seed + 13);
  const auto vval = make_vision(make_captions(spec, d.vision_val, d.seed + 4), vocab, basis, d.sigma_eval, d.frames,
                                "val", d.seed + 14);
  const auto vtest = make_vision(make_captions(spec, d.vision_test, d.seed + 5), vocab, basis, d.sigma_eval,
                                 d.frames, "test", d.seed + 15);

  text::write_corpus(dir / "corpus_train.txt", train);
  text::write_corpus(dir / "corpus_test.txt", test);
  for (std::size_t k = 0; k < spec.styles.size(); ++k) {
    auto ex = sentences_of(pool, static_cast<int>(k));
    ex.resize(std::min(ex.size(), d.example_pool));
    text::write_sentences(example_file(dir, spec.styles[k].name), ex);
  }
  auto refs = sentences_of(pool, text::kFactualStyle);
  refs.resize(std::min(refs.size(), d.factual_refs));
  text::write_sentences(dir / "factual_ref.txt", refs);
  vocab.save(dir / "vocab.txt");
  spec.to_keyvalue().save(dir / "synth_spec.txt");
  write_vision_split(dir / "vision", "train", vtrain);
  write_vision_split(dir / "vision", "val", vval);
  write_vision_split(dir / "vision", "test", vtest);
}

DataSet DataSet::load(const std::filesystem::path& dir) {
  DataSet d;
  d.spec = text::SynthStyleSpec::load(dir / "synth_spec.txt");
  d.vocab = text::Vocab::load(dir / "vocab.txt");
  d.train = text::read_corpus(dir / "corpus_train.txt");
  d.test = text::read_corpus(dir / "corpus_test.txt");
  // Paragraph labels are not stored on disk; the oracle restores them for
  // evaluation bookkeeping only.
  for (auto* ps : {&d.train, &d.test}) {
    for (auto& p : *ps) p.style = p.sentences.empty() ? text::kFactualStyle : text::oracle_style(p.sentences[0], d.spec);
  }
  for (const auto& p : d.train) {
    std::vector<text::TokenSeq> ids;
    for (const auto& s : p.sentences) ids.push_back(d.vocab.encode(s));
    d.train_ids.push_back(std::move(ids));
  }
  d.vision_train = read_vision_split(dir / "vision", "train");
  d.vision_val = read_vision_split(dir / "vision", "val");
  d.vision_test = read_vision_split(dir / "vision", "test");
  for (const auto& s : text::read_sentences(dir / "factual_ref.txt")) d.factual_refs.push_back(d.vocab.encode(s));
  for (std::size_t k = 0; k < d.spec.styles.size(); ++k) {
    auto& pool = d.example_pool[static_cast<int>(k)];
    for (const auto& s : text::read_sentences(example_file(dir, d.spec.styles[k].name))) pool.push_back(d.vocab.encode(s));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Training

Checkpoint initial_checkpoint(const RunConfig& cfg, const DataSet& data) {
  Architecture arch = cfg.arch;
  arch.model.vocab_size = data.vocab.size();
  Checkpoint c{StyleCapModel<float>(arch), data.vocab, 0, {}};
  return c;
}

void run_discriminator(Checkpoint& ckpt, const RunConfig& cfg, const DataSet& data, std::ostream* log) {
  if (log) *log << "step\tloss\tgrad_norm\n";
  auto steps = train_discriminator(ckpt.model, data.train_ids, cfg.disc, [&](const DiscriminatorStep& s) {
    if (log) *log << s.step << '\t' << KeyValueFile::format_number(s.loss) << '\t'
                  << KeyValueFile::format_number(s.grad_norm) << '\n';
  });
  ckpt.step += steps.size();
  ckpt.extra.set("stage", "discriminator");
}

void run_stage1(Checkpoint& ckpt, const RunConfig& cfg, const DataSet& data, std::ostream* log) {
  if (log) write_log_header(*log);
  auto reports = train_stage1(ckpt.model, data.train_ids, cfg.stage1, [&](const LossReport& r) {
    if (log) write_log_row(*log, r);
  });
  ckpt.step += reports.size();
  ckpt.extra.set("stage", "stage1");
}

void run_stage2(Checkpoint& ckpt, const RunConfig& cfg, const DataSet& data, std::ostream* log) {
  if (log) write_log_header(*log);
  auto reports = train_stage2(ckpt.model, data.vision_train, data.vocab, data.train_ids, cfg.stage2,
                              [&](const LossReport& r) {
                                if (log) write_log_row(*log, r);
                              });
  ckpt.step += reports.size();
  ckpt.extra.set("stage", cfg.stage2.toggles.multitask ? "stage2" : "stage2-frozen-lm");
}

// ---------------------------------------------------------------------------
// Evaluation

std::map<int, std::vector<text::TokenSeq>> select_examples(const DataSet& data, std::size_t per_style) {
  std::map<int, std::vector<text::TokenSeq>> out;
  for (const auto& [k, pool] : data.example_pool) {
    if (pool.size() < per_style)
      throw std::invalid_argument("example pool for style " + data.spec.style_name(k) + " holds " +
                                  std::to_string(pool.size()) + " sentences, need " + std::to_string(per_style));
    out[k] = std::vector<text::TokenSeq>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_style));
  }
  return out;
}

EvalReport run_caption_eval(const StyleCapModel<float>& model, const RunConfig& cfg, const DataSet& data,
                            std::span<const VisionItem> items, std::span<const double> lambdas,
                            const std::string& split_name) {
  if (items.empty()) throw std::invalid_argument("evaluation split " + split_name + " is empty");
  std::vector<text::TokenSeq> lm_text;
  for (const auto& p : data.train_ids) lm_text.insert(lm_text.end(), p.begin(), p.end());
  const auto lm = train_ngram_lm(lm_text, cfg.eval.lm_order, cfg.eval.lm_alpha, data.vocab.size());
  EvalInputs in;
  in.test = items;
  in.examples = select_examples(data, cfg.eval.examples);
  in.factual_refs = data.factual_refs;
  in.spec = &data.spec;
  in.vocab = &data.vocab;
  in.lm = &lm;
  in.data = split_name;
  return evaluate(model, in, lambdas);
}

namespace {

std::vector<text::TokenSeq> held_out(const DataSet& data, int style, std::size_t n) {
  std::vector<text::TokenSeq> out;
  for (const auto& p : data.test) {
    for (const auto& s : p.sentences) {
      if (out.size() == n) return out;
      if (text::oracle_style(s, data.spec) == style) out.push_back(data.vocab.encode(s));
    }
  }
  if (out.size() < n)
    throw std::invalid_argument("test split holds " + std::to_string(out.size()) + " sentences of style " +
                                data.spec.style_name(style) + ", need " + std::to_string(n));
  return out;
}

}  // namespace

TransferResult run_transfer_eval(const StyleCapModel<float>& model, const RunConfig& cfg, const DataSet& data) {
  std::vector<text::TokenSeq> sentences;
  for (std::size_t k = 0; k < data.spec.styles.size(); ++k) {
    auto part = held_out(data, static_cast<int>(k), cfg.eval.transfer_per_style);
    sentences.insert(sentences.end(), part.begin(), part.end());
  }
  return evaluate_transfer(model, sentences, select_examples(data, cfg.eval.examples), data.factual_refs,
                           cfg.eval.transfer_lambda, data.spec, data.vocab);
}

ProbeReport run_probe(const StyleCapModel<float>& model, const RunConfig& cfg, const DataSet& data) {
  ProbeReport r;
  std::vector<std::vector<double>> vectors;
  for (std::size_t k = 0; k < data.spec.styles.size(); ++k) {
    for (const auto& s : held_out(data, static_cast<int>(k), cfg.eval.probe_per_style)) {
      const std::vector<text::TokenSeq> one = {s};
      const auto v = target_style(model, std::span<const text::TokenSeq>(one));
      vectors.emplace_back(v.flat().begin(), v.flat().end());
      r.labels.push_back(static_cast<int>(k));
    }
  }
  r.accuracy = linear_probe(vectors, r.labels, 0.5, cfg.eval.seed).accuracy;
  auto shuffled = r.labels;
  std::mt19937_64 rng(cfg.eval.seed + 1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  r.shuffled_accuracy = linear_probe(vectors, shuffled, 0.5, cfg.eval.seed).accuracy;
  r.coords = pca2d(vectors);
  return r;
}

}  // namespace fscap
