// SPDX-License-Identifier: Apache-2.0
#include "fscap/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "fscap/discriminator.hpp"

namespace fscap {

template <typename T>
text::TokenSeq back_translate(const StyleCapModel<T>& model, std::span<const int> noisy, std::span<const int> donor,
                              std::size_t max_len) {
  Tape<T> t(&model.params(), nullptr, false);
  Var mem = fuse(t, model.encode_content(t, noisy), model.extract_style(t, donor));
  return model.greedy_decode(t.value(mem), max_len);
}

// ---------------------------------------------------------------------------

template <typename T>
TextLosses<T>::TextLosses(const StyleCapModel<T>& model, Tape<T>& tape, std::span<const TextPlan> plans)
    : model_(model), t_(tape), plans_(plans), content_noisy_(plans.size()), style_prev_(plans.size()) {}

template <typename T>
Var TextLosses<T>::content_noisy(std::size_t i) {
  if (!content_noisy_[i].valid()) content_noisy_[i] = model_.encode_content(t_, plans_[i].noisy);
  return content_noisy_[i];
}

template <typename T>
Var TextLosses<T>::style_prev(std::size_t i) {
  if (!style_prev_[i].valid()) style_prev_[i] = model_.extract_style(t_, plans_[i].prev);
  return style_prev_[i];
}

template <typename T>
Var TextLosses<T>::dr() {
  Var sum;
  for (std::size_t i = 0; i < plans_.size(); ++i) {
    const auto& p = plans_[i];
    Var logits = model_.decode_logits(t_, fuse(t_, content_noisy(i), style_prev(i)), decoder_input(p.cur));
    Var li = sequence_cross_entropy(t_, logits, decoder_target(p.cur));
    sum = i == 0 ? li : t_.add(sum, li);
  }
  return t_.scale(sum, T(1.0 / static_cast<double>(plans_.size())));
}

template <typename T>
Var TextLosses<T>::nbt() {
  Var sum;
  for (std::size_t i = 0; i < plans_.size(); ++i) {
    const auto& p = plans_[i];
    Var content = model_.encode_content(t_, p.t_prime);
    Var logits = model_.decode_logits(t_, fuse(t_, content, style_prev(i)), decoder_input(p.cur));
    Var li = sequence_cross_entropy(t_, logits, decoder_target(p.cur));
    sum = i == 0 ? li : t_.add(sum, li);
  }
  return t_.scale(sum, T(1.0 / static_cast<double>(plans_.size())));
}

template <typename T>
Var TextLosses<T>::style(const Matrix<T>& candidates, double tau) {
  Var sum = t_.constant(Matrix<T>(1, 1));
  for (std::size_t i = 0; i < plans_.size(); ++i) {
    const auto& p = plans_[i];
    if (p.t_prime.empty() || p.donor_row < 0) continue;
    Var mem = fuse(t_, content_noisy(i), model_.extract_style(t_, p.donor));
    Var logits = model_.decode_logits(t_, mem, decoder_input(p.t_prime));
    Var soft = t_.softmax_rows(t_.slice_rows(logits, 0, p.t_prime.size()));
    sum = t_.add(sum, style_loss_precomputed(model_, t_, soft, candidates, p.donor_row, tau));
  }
  return t_.scale(sum, T(1.0 / static_cast<double>(plans_.size())));
}

template <typename T>
VisualLosses<T>::VisualLosses(const StyleCapModel<T>& model, Tape<T>& tape, std::span<const VisualPlan> plans)
    : model_(model), t_(tape), plans_(plans), visual_content_(plans.size()) {}

template <typename T>
Var VisualLosses<T>::visual_content(std::size_t i) {
  if (!visual_content_[i].valid()) {
    Var x = t_.constant(plans_[i].x.template cast<T>());
    visual_content_[i] = model_.encode_content(t_, project(model_, t_, x));
  }
  return visual_content_[i];
}

template <typename T>
Var VisualLosses<T>::cap() {
  Var sum;
  for (std::size_t i = 0; i < plans_.size(); ++i) {
    const auto& p = plans_[i];
    Var mem = fuse(t_, visual_content(i), model_.extract_style(t_, p.prev));
    Var li = sequence_cross_entropy(t_, model_.decode_logits(t_, mem, decoder_input(p.cur)), decoder_target(p.cur));
    sum = i == 0 ? li : t_.add(sum, li);
  }
  return t_.scale(sum, T(1.0 / static_cast<double>(plans_.size())));
}

template <typename T>
Var VisualLosses<T>::v2l() {
  Var sum;
  for (std::size_t i = 0; i < plans_.size(); ++i) {
    Var a = t_.mean_rows(visual_content(i));
    Var b = t_.mean_rows(model_.encode_content(t_, plans_[i].cur));
    Var li = t_.sum_squares(t_.sub(a, b));
    sum = i == 0 ? li : t_.add(sum, li);
  }
  return t_.scale(sum, T(1.0 / static_cast<double>(plans_.size())));
}

template <typename T>
Var loss_dr(const StyleCapModel<T>& model, Tape<T>& t, std::span<const TextPlan> plans) {
  return TextLosses<T>(model, t, plans).dr();
}

template <typename T>
Var loss_nbt(const StyleCapModel<T>& model, Tape<T>& t, std::span<const TextPlan> plans) {
  return TextLosses<T>(model, t, plans).nbt();
}

template <typename T>
Var loss_cap(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> plans) {
  return VisualLosses<T>(model, t, plans).cap();
}

template <typename T>
Var loss_v2l(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> plans) {
  return VisualLosses<T>(model, t, plans).v2l();
}

template <typename T>
Var average(Tape<T>& t, std::span<const Var> terms) {
  if (terms.empty()) return t.constant(Matrix<T>(1, 1));
  std::vector<T> w(terms.size(), T(1.0 / static_cast<double>(terms.size())));
  return t.weighted_sum(terms, w);
}

template <typename T>
Var loss_text(const StyleCapModel<T>& model, Tape<T>& t, std::span<const TextPlan> plans,
              const Matrix<T>& candidates, double tau, const LossToggles& on, LossBreakdown* out) {
  TextLosses<T> losses(model, t, plans);
  std::vector<Var> terms;
  if (on.dr) terms.push_back(losses.dr());
  if (on.dr && out) out->dr = static_cast<double>(t.scalar(terms.back()));
  if (on.nbt) terms.push_back(losses.nbt());
  if (on.nbt && out) out->nbt = static_cast<double>(t.scalar(terms.back()));
  if (on.style) terms.push_back(losses.style(candidates, tau));
  if (on.style && out) out->style = static_cast<double>(t.scalar(terms.back()));
  Var total = average(t, terms);
  if (out) out->text = static_cast<double>(t.scalar(total));
  return total;
}

template <typename T>
Var loss_visual(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> plans, const LossToggles& on,
                LossBreakdown* out) {
  VisualLosses<T> losses(model, t, plans);
  std::vector<Var> terms;
  if (on.cap) terms.push_back(losses.cap());
  if (on.cap && out) out->cap = static_cast<double>(t.scalar(terms.back()));
  if (on.v2l) terms.push_back(losses.v2l());
  if (on.v2l && out) out->v2l = static_cast<double>(t.scalar(terms.back()));
  Var total = average(t, terms);
  if (out) out->visual = static_cast<double>(t.scalar(total));
  return total;
}

template <typename T>
Var total_loss(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> visual,
               std::span<const TextPlan> text_plans, const Matrix<T>& candidates, double tau, const LossToggles& on,
               LossBreakdown* out) {
  Var total = loss_visual(model, t, visual, on, out);
  if (on.multitask) total = t.add(total, loss_text(model, t, text_plans, candidates, tau, on, out));
  if (out) out->total = static_cast<double>(t.scalar(total));
  return total;
}

// ---------------------------------------------------------------------------
// Configs

namespace {

void read_toggles(const KeyValueFile& kv, const std::string& prefix, LossToggles& on) {
  on.dr = kv.get_bool(prefix + "use_dr", on.dr);
  on.nbt = kv.get_bool(prefix + "use_nbt", on.nbt);
  on.style = kv.get_bool(prefix + "use_style", on.style);
  on.cap = kv.get_bool(prefix + "use_cap", on.cap);
  on.v2l = kv.get_bool(prefix + "use_v2l", on.v2l);
  on.multitask = kv.get_bool(prefix + "multitask", on.multitask);
}

const char* flag(bool b) { return b ? "true" : "false"; }

std::size_t get_size(const KeyValueFile& kv, const std::string& key, std::size_t fallback) {
  const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw std::invalid_argument(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

std::uint64_t get_seed(const KeyValueFile& kv, const std::string& key, std::uint64_t fallback) {
  auto v = kv.find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return seed;
  } catch (const std::exception&) {
    throw std::runtime_error("key '" + key + "' is not a seed: " + *v);
  }
}

void check_common(std::size_t batch, double noise, const char* stage) {
  if (batch < 2) throw std::invalid_argument(std::string(stage) + ".batch_size must be >= 2");
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument(std::string(stage) + ".noise must be in [0, 1]");
}

}  // namespace

void Stage1Config::validate() const {
  check_common(batch_size, noise, "stage1");
  if (!(toggles.dr || toggles.nbt || toggles.style)) throw std::invalid_argument("stage1: every text loss is disabled");
  if (!(lr > 0.0)) throw std::invalid_argument("stage1.lr must be > 0");
  for (const auto& [g, v] : group_lr) {
    if (!(v > 0.0)) throw std::invalid_argument("stage1.lr." + g + " must be > 0");
  }
}

Stage1Config Stage1Config::from_keyvalue(const KeyValueFile& kv) {
  Stage1Config c;
  c.epochs = get_size(kv, "stage1.epochs", c.epochs);
  c.batch_size = get_size(kv, "stage1.batch_size", c.batch_size);
  c.lr = kv.get_double("stage1.lr", c.lr);
  for (auto g : {group::kStyle, group::kContent, group::kGenerator}) {
    const std::string key = "stage1.lr." + std::string(g);
    if (kv.has(key)) c.group_lr[std::string(g)] = kv.get_double(key, c.lr);
  }
  c.clip_norm = kv.get_double("stage1.clip_norm", c.clip_norm);
  c.noise = kv.get_double("stage1.noise", c.noise);
  c.max_extra_tokens = get_size(kv, "stage1.max_extra_tokens", c.max_extra_tokens);
  read_toggles(kv, "stage1.", c.toggles);
  c.seed = get_seed(kv, "stage1.seed", c.seed);
  c.validate();
  return c;
}

void Stage1Config::write(KeyValueFile& kv) const {
  kv.set_number("stage1.epochs", epochs);
  kv.set_number("stage1.batch_size", batch_size);
  kv.set_number("stage1.lr", lr);
  for (const auto& [g, v] : group_lr) kv.set_number("stage1.lr." + g, v);
  kv.set_number("stage1.clip_norm", clip_norm);
  kv.set_number("stage1.noise", noise);
  kv.set_number("stage1.max_extra_tokens", max_extra_tokens);
  kv.set("stage1.use_dr", flag(toggles.dr));
  kv.set("stage1.use_nbt", flag(toggles.nbt));
  kv.set("stage1.use_style", flag(toggles.style));
  kv.set("stage1.seed", std::to_string(seed));
}

void Stage2Config::validate() const {
  check_common(batch_size, noise, "stage2");
  if (!(lr_m > 0.0) || !(lr_other > 0.0)) throw std::invalid_argument("stage2: learning rates must be > 0");
  if (!(toggles.cap || toggles.v2l)) throw std::invalid_argument("stage2: every visual loss is disabled");
  if (toggles.multitask && !(toggles.dr || toggles.nbt || toggles.style)) {
    throw std::invalid_argument("stage2: multitask needs at least one text loss");
  }
}

Stage2Config Stage2Config::from_keyvalue(const KeyValueFile& kv) {
  Stage2Config c;
  c.epochs = get_size(kv, "stage2.epochs", c.epochs);
  c.batch_size = get_size(kv, "stage2.batch_size", c.batch_size);
  c.lr_m = kv.get_double("stage2.lr_m", c.lr_m);
  c.lr_other = kv.get_double("stage2.lr_other", c.lr_other);
  c.clip_norm = kv.get_double("stage2.clip_norm", c.clip_norm);
  c.noise = kv.get_double("stage2.noise", c.noise);
  c.max_extra_tokens = get_size(kv, "stage2.max_extra_tokens", c.max_extra_tokens);
  read_toggles(kv, "stage2.", c.toggles);
  c.seed = get_seed(kv, "stage2.seed", c.seed);
  c.validate();
  return c;
}

void Stage2Config::write(KeyValueFile& kv) const {
  kv.set_number("stage2.epochs", epochs);
  kv.set_number("stage2.batch_size", batch_size);
  kv.set_number("stage2.lr_m", lr_m);
  kv.set_number("stage2.lr_other", lr_other);
  kv.set_number("stage2.clip_norm", clip_norm);
  kv.set_number("stage2.noise", noise);
  kv.set_number("stage2.max_extra_tokens", max_extra_tokens);
  kv.set("stage2.use_dr", flag(toggles.dr));
  kv.set("stage2.use_nbt", flag(toggles.nbt));
  kv.set("stage2.use_style", flag(toggles.style));
  kv.set("stage2.use_cap", flag(toggles.cap));
  kv.set("stage2.use_v2l", flag(toggles.v2l));
  kv.set("stage2.multitask", flag(toggles.multitask));
  kv.set("stage2.seed", std::to_string(seed));
}

// ---------------------------------------------------------------------------
// Logging

namespace {

constexpr std::string_view kLogGroups[] = {group::kStyle, group::kContent, group::kGenerator, group::kProjection,
                                           group::kDiscriminator};

}  // namespace

void write_log_header(std::ostream& out) {
  out << "step\tepoch\tL_DR\tL_NBT\tL_style\tL_Text\tL_Cap\tL_V2L\tL_Visual\tL_total";
  for (auto g : kLogGroups) out << "\tgn_" << g;
  out << '\n';
}

void write_log_row(std::ostream& out, const LossReport& r) {
  const auto& l = r.loss;
  out << r.step << '\t' << r.epoch;
  for (double v : {l.dr, l.nbt, l.style, l.text, l.cap, l.v2l, l.visual, l.total}) {
    out << '\t' << KeyValueFile::format_number(v);
  }
  for (auto g : kLogGroups) {
    auto it = r.grad_norm.find(std::string(g));
    out << '\t' << KeyValueFile::format_number(it == r.grad_norm.end() ? 0.0 : it->second);
  }
  out << '\n';
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

class FrozenScope {
 public:
  explicit FrozenScope(ParamStore<float>& store) : store_(store) {
    for (const auto& g : store.groups()) saved_.emplace_back(g.name, g.frozen);
  }
  ~FrozenScope() {
    for (const auto& [name, frozen] : saved_) store_.set_frozen(name, frozen);
  }
  FrozenScope(const FrozenScope&) = delete;
  FrozenScope& operator=(const FrozenScope&) = delete;

 private:
  ParamStore<float>& store_;
  std::vector<std::pair<std::string, bool>> saved_;
};

std::vector<std::size_t> usable_paragraphs(const Corpus& corpus) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].size() >= 2) out.push_back(i);
  }
  if (out.size() < 2) throw std::invalid_argument("training corpus needs >= 2 paragraphs with >= 2 sentences");
  return out;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

Matrix<float> donor_candidates(const StyleCapModel<float>& model, std::span<const TextPlan> plans) {
  std::vector<text::TokenSeq> donors;
  donors.reserve(plans.size());
  for (const auto& p : plans) donors.push_back(p.donor);
  return candidate_embeddings(model, std::span<const text::TokenSeq>(donors));
}

LossReport finish_step(ParamStore<float>& store, Gradients<float>& grads, Adam<float>& opt, LossBreakdown loss,
                       std::size_t step, std::size_t epoch) {
  LossReport r;
  r.step = step;
  r.epoch = epoch;
  r.loss = loss;
  for (const auto& g : store.groups()) r.grad_norm[g.name] = grads.group_norm(store, g.name);
  const double values[] = {loss.dr, loss.nbt, loss.style, loss.cap, loss.v2l, loss.total};
  for (double v : values) {
    if (!std::isfinite(v)) throw TrainingDiverged("non-finite loss at step " + std::to_string(step), r);
  }
  opt.step(store, grads);
  return r;
}

}  // namespace

std::vector<TextPlan> plan_text_batch(const StyleCapModel<float>& model, const Corpus& corpus,
                                      std::span<const std::size_t> paragraph_ids, double noise,
                                      std::size_t max_extra_tokens, bool with_t_prime, std::mt19937_64& rng) {
  const std::size_t b = paragraph_ids.size();
  std::vector<TextPlan> plans(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& para = corpus[paragraph_ids[i]];
    const std::size_t j = 1 + uniform_index(rng, para.size() - 1);
    auto& p = plans[i];
    p.prev = para[j - 1];
    p.cur = para[j];
    p.noisy = text::corrupt(p.cur, noise, rng);
    std::size_t other = uniform_index(rng, b - 1);
    if (other >= i) ++other;
    const auto& donor_para = corpus[paragraph_ids[other]];
    p.donor = donor_para[uniform_index(rng, donor_para.size())];
    p.donor_row = static_cast<int>(i);
  }
  if (with_t_prime) {
    for (auto& p : plans) p.t_prime = back_translate(model, p.noisy, p.donor, p.cur.size() + max_extra_tokens);
  }
  return plans;
}

std::vector<LossReport> train_stage1(StyleCapModel<float>& model, const Corpus& corpus, const Stage1Config& cfg,
                                     const StepCallback& on_step) {
  cfg.validate();
  auto& store = model.params();
  FrozenScope scope(store);
  for (const auto& g : store.groups()) {
    const bool train = g.name == group::kStyle || g.name == group::kContent || g.name == group::kGenerator;
    store.set_frozen(g.name, !train);
  }
  auto ids = usable_paragraphs(corpus);
  AdamConfig ac;
  ac.default_lr = cfg.lr;
  ac.group_lr = cfg.group_lr;
  ac.clip_norm = cfg.clip_norm;
  Adam<float> opt(store, ac);
  Gradients<float> grads(store);
  std::mt19937_64 rng(cfg.seed);
  const double tau = model.arch().discriminator.temperature;
  const bool need_t_prime = cfg.toggles.nbt || cfg.toggles.style;

  std::vector<LossReport> log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t start = 0; start + 2 <= ids.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(ids.size(), start + cfg.batch_size);
      auto batch_ids = std::span<const std::size_t>(ids).subspan(start, end - start);
      auto plans = plan_text_batch(model, corpus, batch_ids, cfg.noise, cfg.max_extra_tokens, need_t_prime, rng);
      Matrix<float> cands = cfg.toggles.style ? donor_candidates(model, plans) : Matrix<float>();
      grads.zero();
      LossBreakdown lb;
      {
        Tape<float> t(&store, &grads);
        Var loss = loss_text(model, t, std::span<const TextPlan>(plans), cands, tau, cfg.toggles, &lb);
        lb.total = lb.text;
        t.backward(loss);
      }
      log.push_back(finish_step(store, grads, opt, lb, log.size(), epoch));
      if (on_step) on_step(log.back());
    }
  }
  return log;
}

std::vector<LossReport> train_stage2(StyleCapModel<float>& model, std::span<const VisionItem> vision,
                                     const text::Vocab& vocab, const Corpus& corpus, const Stage2Config& cfg,
                                     const StepCallback& on_step) {
  cfg.validate();
  if (vision.size() < 2) throw std::invalid_argument("stage 2 needs >= 2 vision items");
  auto& store = model.params();
  FrozenScope scope(store);
  for (const auto& g : store.groups()) {
    bool train = g.name == group::kProjection;
    if (cfg.toggles.multitask) train = train || g.name == group::kContent || g.name == group::kGenerator;
    store.set_frozen(g.name, !train);
  }
  std::vector<text::TokenSeq> captions;
  captions.reserve(vision.size());
  for (const auto& v : vision) captions.push_back(vocab.encode(v.caption));

  std::vector<std::size_t> text_ids;
  if (cfg.toggles.multitask) text_ids = usable_paragraphs(corpus);
  std::size_t text_cursor = text_ids.size();

  AdamConfig ac;
  ac.default_lr = cfg.lr_other;
  ac.group_lr[std::string(group::kProjection)] = cfg.lr_m;
  ac.clip_norm = cfg.clip_norm;
  Adam<float> opt(store, ac);
  Gradients<float> grads(store);
  std::mt19937_64 rng(cfg.seed);
  const double tau = model.arch().discriminator.temperature;
  const bool need_t_prime = cfg.toggles.multitask && (cfg.toggles.nbt || cfg.toggles.style);

  std::vector<std::size_t> order(vision.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LossReport> log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<VisualPlan> vplans;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        std::size_t other = uniform_index(rng, vision.size() - 1);
        if (other >= i) ++other;
        vplans.push_back(VisualPlan{vision[i].feature, captions[i], captions[other]});
      }
      std::vector<TextPlan> tplans;
      Matrix<float> cands;
      if (cfg.toggles.multitask) {
        std::vector<std::size_t> batch_ids;
        while (batch_ids.size() < end - start) {
          if (text_cursor >= text_ids.size()) {
            std::shuffle(text_ids.begin(), text_ids.end(), rng);
            text_cursor = 0;
          }
          batch_ids.push_back(text_ids[text_cursor++]);
        }
        tplans = plan_text_batch(model, corpus, batch_ids, cfg.noise, cfg.max_extra_tokens, need_t_prime, rng);
        if (cfg.toggles.style) cands = donor_candidates(model, tplans);
      }
      grads.zero();
      LossBreakdown lb;
      {
        Tape<float> t(&store, &grads);
        Var loss = total_loss(model, t, std::span<const VisualPlan>(vplans), std::span<const TextPlan>(tplans), cands,
                              tau, cfg.toggles, &lb);
        t.backward(loss);
      }
      log.push_back(finish_step(store, grads, opt, lb, log.size(), epoch));
      if (on_step) on_step(log.back());
    }
  }
  return log;
}

// ---------------------------------------------------------------------------
// Gradient check

std::string_view loss_name(LossSelector s) {
  switch (s) {
    case LossSelector::kFuse: return "fuse";
    case LossSelector::kDr: return "L_DR";
    case LossSelector::kNbt: return "L_NBT";
    case LossSelector::kStyle: return "L_style";
    case LossSelector::kText: return "L_Text";
    case LossSelector::kCap: return "L_Cap";
    case LossSelector::kV2l: return "L_V2L";
    case LossSelector::kVisual: return "L_Visual";
    case LossSelector::kTotal: return "L_total";
  }
  return "?";
}

std::vector<LossSelector> all_losses() {
  return {LossSelector::kFuse, LossSelector::kDr,  LossSelector::kNbt,    LossSelector::kStyle, LossSelector::kText,
          LossSelector::kCap,  LossSelector::kV2l, LossSelector::kVisual, LossSelector::kTotal};
}

Architecture grad_check_architecture() {
  Architecture a;
  a.model.vocab_size = 8;
  a.model.d_model = 4;
  a.model.heads = 2;
  a.model.ff_dim = 4;
  a.model.encoder_layers = 1;
  a.model.decoder_layers = 1;
  a.model.max_positions = 12;
  a.discriminator.d_model = 4;
  a.discriminator.heads = 1;
  a.discriminator.ff_dim = 4;
  a.discriminator.layers = 1;
  a.projection.visual_dim = 3;
  a.projection.const_slots = 2;
  a.projection.max_frames = 2;
  a.projection.ff_dim = 4;
  a.projection.layers = 1;
  return a;
}

namespace {

double rel_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3}); }

struct ToyData {
  std::vector<TextPlan> text;
  std::vector<VisualPlan> visual;
};

ToyData toy_data(const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int lo = text::kReservedCount;
  const int hi = static_cast<int>(arch.model.vocab_size) - 1;
  std::uniform_int_distribution<int> tok(lo, hi);
  auto seq = [&](std::size_t n) {
    text::TokenSeq s(n);
    for (auto& v : s) v = tok(rng);
    return s;
  };
  std::normal_distribution<double> nd(0.0, 1.0);
  ToyData d;
  for (int i = 0; i < 2; ++i) {
    TextPlan p;
    p.prev = seq(3);
    p.cur = seq(3);
    p.noisy = seq(2);
    p.donor = seq(2 + i);
    p.t_prime = seq(3);
    p.donor_row = i;
    d.text.push_back(p);
    VisualPlan v;
    v.x = Matrix<float>(1 + i, arch.projection.visual_dim);
    for (auto& f : v.x.flat()) f = static_cast<float>(nd(rng));
    v.cur = seq(3);
    v.prev = seq(2);
    d.visual.push_back(v);
  }
  return d;
}

bool stage1_loss(LossSelector s) {
  return s == LossSelector::kDr || s == LossSelector::kNbt || s == LossSelector::kStyle || s == LossSelector::kText;
}

template <typename T>
Var build_loss(LossSelector which, const StyleCapModel<T>& m, Tape<T>& t, const ToyData& d, const Matrix<T>& cands) {
  const double tau = m.arch().discriminator.temperature;
  std::span<const TextPlan> tp(d.text);
  std::span<const VisualPlan> vp(d.visual);
  LossToggles all;
  switch (which) {
    case LossSelector::kDr: return loss_dr(m, t, tp);
    case LossSelector::kNbt: return loss_nbt(m, t, tp);
    case LossSelector::kStyle: return TextLosses<T>(m, t, tp).style(cands, tau);
    case LossSelector::kText: return loss_text(m, t, tp, cands, tau, all);
    case LossSelector::kCap: return loss_cap(m, t, vp);
    case LossSelector::kV2l: return loss_v2l(m, t, vp);
    case LossSelector::kVisual: return loss_visual(m, t, vp, all);
    case LossSelector::kTotal: return total_loss(m, t, vp, tp, cands, tau, all);
    case LossSelector::kFuse: break;
  }
  throw std::logic_error("build_loss: unsupported selector");
}

template <typename T>
Matrix<T> analytic_fuse_grad(const Matrix<double>& c, const Matrix<double>& s, const Matrix<double>& r,
                             Matrix<double>* grad_s) {
  Tape<T> t;
  Var vc = t.input(c.template cast<T>());
  Var vs = t.input(s.template cast<T>());
  t.backward(t.sum(t.matmul(fuse(t, vc, vs), t.constant(r.template cast<T>()))));
  *grad_s = t.grad(vs).template cast<double>();
  return t.grad(vc);
}

GradCheckResult fuse_check(Precision precision, double eps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix<double> c(3, 4), s(1, 4), r(4, 2);
  for (auto* m : {&c, &s, &r})
    for (auto& v : m->flat()) v = nd(rng);
  auto value = [&] {
    Tape<double> t;
    return t.scalar(t.sum(t.matmul(fuse(t, t.constant(c), t.constant(s)), t.constant(r))));
  };
  Matrix<double> gs;
  Matrix<double> gc = precision == Precision::kF64 ? analytic_fuse_grad<double>(c, s, r, &gs)
                                                   : analytic_fuse_grad<float>(c, s, r, &gs).cast<double>();
  GradCheckResult out;
  out.param_count = c.size() + s.size();
  for (auto [m, g] : {std::pair{&c, &gc}, std::pair{&s, &gs}}) {
    for (std::size_t j = 0; j < m->size(); ++j) {
      const double keep = m->flat()[j];
      m->flat()[j] = keep + eps;
      const double up = value();
      m->flat()[j] = keep - eps;
      const double down = value();
      m->flat()[j] = keep;
      out.max_rel_error = std::max(out.max_rel_error, rel_error(g->flat()[j], (up - down) / (2 * eps)));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace

GradCheckResult grad_check(LossSelector which, const Architecture& arch, Precision precision, double eps,
                           std::uint64_t seed) {
  if (which == LossSelector::kFuse) return fuse_check(precision, eps, seed);
  Architecture a = arch;
  a.model.seed = seed;
  StyleCapModel<double> model(a);
  auto& store = model.params();
  for (const auto& g : store.groups()) {
    const bool train = stage1_loss(which)
                           ? (g.name == group::kStyle || g.name == group::kContent || g.name == group::kGenerator)
                           : (g.name == group::kProjection || g.name == group::kContent || g.name == group::kGenerator);
    store.set_frozen(g.name, !train);
  }
  ToyData data = toy_data(a, seed + 1);
  std::vector<text::TokenSeq> donors;
  for (const auto& p : data.text) donors.push_back(p.donor);
  const Matrix<double> cands = candidate_embeddings(model, std::span<const text::TokenSeq>(donors));

  std::vector<Matrix<double>> analytic(store.size());
  if (precision == Precision::kF64) {
    Gradients<double> g(store);
    Tape<double> t(&store, &g);
    t.backward(build_loss(which, model, t, data, cands));
    for (std::size_t i = 0; i < store.size(); ++i) analytic[i] = g[ParamId{static_cast<std::uint32_t>(i)}];
  } else {
    StyleCapModel<float> m32 = model.cast<float>();
    Gradients<float> g(m32.params());
    Tape<float> t(&m32.params(), &g);
    t.backward(build_loss(which, m32, t, data, cands.cast<float>()));
    for (std::size_t i = 0; i < store.size(); ++i) {
      analytic[i] = g[ParamId{static_cast<std::uint32_t>(i)}].cast<double>();
    }
  }

  auto value = [&] {
    Tape<double> t(&store, nullptr, false);
    return t.scalar(build_loss(which, model, t, data, cands));
  };
  GradCheckResult out;
  out.param_count = store.scalar_count();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ParamId id{static_cast<std::uint32_t>(i)};
    if (!store.trainable(id)) continue;
    auto w = store[id].value.flat();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double keep = w[j];
      w[j] = keep + eps;
      const double up = value();
      w[j] = keep - eps;
      const double down = value();
      w[j] = keep;
      out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic[i].flat()[j], (up - down) / (2 * eps)));
      ++out.checked;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

#define FSCAP_INSTANTIATE(T)                                                                                      \
  template text::TokenSeq back_translate<T>(const StyleCapModel<T>&, std::span<const int>, std::span<const int>,   \
                                            std::size_t);                                                          \
  template class TextLosses<T>;                                                                                    \
  template class VisualLosses<T>;                                                                                  \
  template Var loss_dr<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const TextPlan>);                           \
  template Var loss_nbt<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const TextPlan>);                          \
  template Var loss_cap<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const VisualPlan>);                        \
  template Var loss_v2l<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const VisualPlan>);                        \
  template Var average<T>(Tape<T>&, std::span<const Var>);                                                         \
  template Var loss_text<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const TextPlan>, const Matrix<T>&, double, \
                            const LossToggles&, LossBreakdown*);                                                   \
  template Var loss_visual<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const VisualPlan>, const LossToggles&,  \
                              LossBreakdown*);                                                                     \
  template Var total_loss<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const VisualPlan>,                       \
                             std::span<const TextPlan>, const Matrix<T>&, double, const LossToggles&, LossBreakdown*);

FSCAP_INSTANTIATE(float)
FSCAP_INSTANTIATE(double)

#undef FSCAP_INSTANTIATE

}  // namespace fscap
