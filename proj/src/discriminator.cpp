// SPDX-License-Identifier: Apache-2.0
#include "fscap/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fscap/optimizer.hpp"

namespace fscap {

template <typename T>
Var embed_style(const StyleCapModel<T>& model, Tape<T>& t, std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("embed_style: empty input");
  text::TokenSeq ids{text::kCls};
  ids.insert(ids.end(), tokens.begin(), tokens.end());
  const auto& dc = model.arch().discriminator;
  Var x = t.gather_rows(t.param(model.ids().disc_embed), ids);
  x = t.add(x, model.positions(t, ids.size(), dc.d_model));
  Var h = encoder_stack(t, x, model.ids().disc, dc.heads);
  return t.slice_rows(h, 0, 1);
}

template <typename T>
Var embed_style_soft(const StyleCapModel<T>& model, Tape<T>& t, Var probs) {
  const std::size_t rows = t.value(probs).rows();
  if (rows == 0) throw std::invalid_argument("embed_style: empty input");
  const auto& dc = model.arch().discriminator;
  Var table = t.param(model.ids().disc_embed);
  static constexpr int kClsId[] = {text::kCls};
  Var x = t.concat_rows(t.gather_rows(table, kClsId), t.matmul(probs, table));
  x = t.add(x, model.positions(t, rows + 1, dc.d_model));
  Var h = encoder_stack(t, x, model.ids().disc, dc.heads);
  return t.slice_rows(h, 0, 1);
}

template <typename T>
double similarity(const StyleCapModel<T>& model, std::span<const int> a, std::span<const int> b) {
  Tape<T> t(&model.params(), nullptr, false);
  const Matrix<T> ea = t.value(embed_style(model, t, a));
  const Matrix<T> eb = t.value(embed_style(model, t, b));
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < ea.cols(); ++i) {
    ab += double(ea(0, i)) * double(eb(0, i));
    aa += double(ea(0, i)) * double(ea(0, i));
    bb += double(eb(0, i)) * double(eb(0, i));
  }
  if (!(aa > 0.0) || !(bb > 0.0)) throw std::domain_error("similarity: zero-norm embedding");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

template <typename T>
Var info_nce(Tape<T>& t, Var anchors, Var positives, double tau) {
  const std::size_t b = t.value(anchors).rows();
  if (b < 2) throw std::invalid_argument("contrastive_loss: batch size must be >= 2");
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  Var sims = t.scale(t.matmul_nt(t.l2_normalize_rows(anchors), t.l2_normalize_rows(positives)), T(1.0 / tau));
  std::vector<int> targets(b);
  std::iota(targets.begin(), targets.end(), 0);
  return t.scale(t.cross_entropy(sims, targets), T(1.0 / static_cast<double>(b)));
}

template <typename T>
Var contrastive_loss(const StyleCapModel<T>& model, Tape<T>& t,
                     std::span<const std::pair<text::TokenSeq, text::TokenSeq>> batch, double tau) {
  if (batch.size() < 2) throw std::invalid_argument("contrastive_loss: batch size must be >= 2");
  Var anchors, positives;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var a = embed_style(model, t, batch[i].first);
    Var p = embed_style(model, t, batch[i].second);
    anchors = i == 0 ? a : t.concat_rows(anchors, a);
    positives = i == 0 ? p : t.concat_rows(positives, p);
  }
  return info_nce(t, anchors, positives, tau);
}

template <typename T>
Var style_loss(const StyleCapModel<T>& model, Tape<T>& t, Var soft_probs, std::span<const int> donor,
               std::span<const text::TokenSeq> negatives, double tau) {
  if (negatives.empty()) {
    // A single candidate always has probability 1.
    return t.constant(Matrix<T>(1, 1));
  }
  Var query = t.l2_normalize_rows(embed_style_soft(model, t, soft_probs));
  Var cands = embed_style(model, t, donor);
  for (const auto& n : negatives) cands = t.concat_rows(cands, embed_style(model, t, n));
  Var sims = t.scale(t.matmul_nt(query, t.l2_normalize_rows(cands)), T(1.0 / tau));
  static constexpr int kDonorIndex[] = {0};
  return t.cross_entropy(sims, kDonorIndex);
}

template <typename T>
Matrix<T> candidate_embeddings(const StyleCapModel<T>& model, std::span<const text::TokenSeq> candidates) {
  const std::size_t d = model.arch().discriminator.d_model;
  Matrix<T> out(candidates.size(), d);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    Tape<T> t(&model.params(), nullptr, false);
    const auto& e = t.value(t.l2_normalize_rows(embed_style(model, t, candidates[i])));
    std::copy(e.data(), e.data() + d, out.row(i).data());
  }
  return out;
}

template <typename T>
Var style_loss_precomputed(const StyleCapModel<T>& model, Tape<T>& t, Var soft_probs,
                           const Matrix<T>& normalized_candidates, int donor_row, double tau) {
  if (normalized_candidates.rows() < 2) return t.constant(Matrix<T>(1, 1));
  Var query = t.l2_normalize_rows(embed_style_soft(model, t, soft_probs));
  Var sims = t.scale(t.matmul_nt(query, t.constant(normalized_candidates)), T(1.0 / tau));
  const int target[] = {donor_row};
  return t.cross_entropy(sims, target);
}

template <typename T>
std::vector<double> style_match_probabilities(const StyleCapModel<T>& model, std::span<const int> query,
                                              std::span<const text::TokenSeq> candidates, double tau) {
  Tape<T> t(&model.params(), nullptr, false);
  Var q = t.l2_normalize_rows(embed_style(model, t, query));
  std::vector<double> logits;
  for (const auto& c : candidates) {
    Var e = t.l2_normalize_rows(embed_style(model, t, c));
    logits.push_back(static_cast<double>(t.scalar(t.matmul_nt(q, e))) / tau);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& l : logits) z += (l = std::exp(l - mx));
  for (auto& l : logits) l /= z;
  return logits;
}

std::vector<DiscriminatorStep> train_discriminator(StyleCapModel<float>& model,
                                                   std::span<const std::vector<text::TokenSeq>> paragraphs,
                                                   const DiscriminatorTrainConfig& cfg,
                                                   const std::function<void(const DiscriminatorStep&)>& on_step) {
  auto& store = model.params();
  std::vector<std::pair<std::string, bool>> saved;
  for (const auto& g : store.groups()) {
    saved.emplace_back(g.name, g.frozen);
    store.set_frozen(g.name, g.name != group::kDiscriminator);
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (paragraphs[i].size() >= 2) usable.push_back(i);
  }
  if (usable.size() < 2) throw std::invalid_argument("train_discriminator: need >= 2 paragraphs with 2+ sentences");

  AdamConfig ac;
  ac.default_lr = cfg.lr;
  Adam<float> opt(store, ac);
  Gradients<float> grads(store);
  std::mt19937_64 rng(cfg.seed);
  const double tau = model.arch().discriminator.temperature;
  std::vector<DiscriminatorStep> log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(usable.begin(), usable.end(), rng);
    for (std::size_t start = 0; start + 2 <= usable.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(usable.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      std::vector<std::pair<text::TokenSeq, text::TokenSeq>> batch;
      for (std::size_t i = start; i < end; ++i) {
        const auto& para = paragraphs[usable[i]];
        std::uniform_int_distribution<std::size_t> pick(0, para.size() - 1);
        const std::size_t a = pick(rng);
        std::size_t b = pick(rng);
        while (b == a) b = pick(rng);
        batch.emplace_back(para[a], para[b]);
      }
      grads.zero();
      Tape<float> t(&store, &grads, true);
      Var loss = contrastive_loss(model, t, std::span<const std::pair<text::TokenSeq, text::TokenSeq>>(batch), tau);
      t.backward(loss);
      const double value = t.scalar(loss);
      if (!std::isfinite(value)) throw std::runtime_error("train_discriminator: non-finite loss");
      DiscriminatorStep s{log.size(), value, opt.step(store, grads)};
      log.push_back(s);
      if (on_step) on_step(s);
    }
  }
  for (const auto& [name, frozen] : saved) store.set_frozen(name, frozen);
  return log;
}

#define FSCAP_INSTANTIATE(T)                                                                                  \
  template Var embed_style<T>(const StyleCapModel<T>&, Tape<T>&, std::span<const int>);                        \
  template Var embed_style_soft<T>(const StyleCapModel<T>&, Tape<T>&, Var);                                    \
  template double similarity<T>(const StyleCapModel<T>&, std::span<const int>, std::span<const int>);         \
  template Var info_nce<T>(Tape<T>&, Var, Var, double);                                                        \
  template Var contrastive_loss<T>(const StyleCapModel<T>&, Tape<T>&,                                          \
                                   std::span<const std::pair<text::TokenSeq, text::TokenSeq>>, double);        \
  template Var style_loss<T>(const StyleCapModel<T>&, Tape<T>&, Var, std::span<const int>,                     \
                             std::span<const text::TokenSeq>, double);                                         \
  template Matrix<T> candidate_embeddings<T>(const StyleCapModel<T>&, std::span<const text::TokenSeq>);        \
  template Var style_loss_precomputed<T>(const StyleCapModel<T>&, Tape<T>&, Var, const Matrix<T>&, int,       \
                                         double);                                                              \
  template std::vector<double> style_match_probabilities<T>(const StyleCapModel<T>&, std::span<const int>,    \
                                                            std::span<const text::TokenSeq>, double);

FSCAP_INSTANTIATE(float)
FSCAP_INSTANTIATE(double)

#undef FSCAP_INSTANTIATE

}  // namespace fscap
