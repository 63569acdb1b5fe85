// SPDX-License-Identifier: Apache-2.0
//
// Style discriminator D: a small CLS-pooled encoder trained contrastively so
// that sentences of one paragraph embed close together. D(a, b) is the
// in-batch softmax probability that b is the style match of a.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "fscap/model.hpp"

namespace fscap {

/// Per-position probability rows over the vocabulary.
template <typename T>
using SoftTokenSeq = Matrix<T>;

/// CLS-position hidden state of D over [CLS] + tokens. Throws on empty input.
template <typename T>
Var embed_style(const StyleCapModel<T>& model, Tape<T>& t, std::span<const int> tokens);

/// Same, with each input embedding the probability-weighted mixture of D's
/// embedding rows. `probs` is (positions x vocab) and may carry gradients.
template <typename T>
Var embed_style_soft(const StyleCapModel<T>& model, Tape<T>& t, Var probs);

/// Cosine of the two D embeddings. Throws std::domain_error on a zero norm.
template <typename T>
double similarity(const StyleCapModel<T>& model, std::span<const int> a, std::span<const int> b);

/// Mean over anchors of -log softmax_j(sim(a_i, p_j) / tau)[i]. B >= 2.
template <typename T>
Var contrastive_loss(const StyleCapModel<T>& model, Tape<T>& t,
                     std::span<const std::pair<text::TokenSeq, text::TokenSeq>> batch, double tau);

/// Contrastive loss from precomputed (B x d) anchor and positive embeddings.
template <typename T>
Var info_nce(Tape<T>& t, Var anchors, Var positives, double tau);

/// -log D(t', t_j): softmax over {t_j} + negatives of the scaled cosine
/// between the soft sequence and each candidate, read at t_j. Gradients
/// reach only the soft sequence (D is used read-only). Returns a constant 0
/// when there are no negatives.
template <typename T>
Var style_loss(const StyleCapModel<T>& model, Tape<T>& t, Var soft_probs, std::span<const int> donor,
               std::span<const text::TokenSeq> negatives, double tau);

/// L2-normalized D embeddings of hard sequences, one row each, no gradient.
template <typename T>
Matrix<T> candidate_embeddings(const StyleCapModel<T>& model, std::span<const text::TokenSeq> candidates);

/// style_loss against precomputed normalized candidate rows; the donor is
/// row `donor_row`.
template <typename T>
Var style_loss_precomputed(const StyleCapModel<T>& model, Tape<T>& t, Var soft_probs,
                           const Matrix<T>& normalized_candidates, int donor_row, double tau);

/// Probabilities D assigns to each candidate (donor first, then negatives).
template <typename T>
std::vector<double> style_match_probabilities(const StyleCapModel<T>& model, std::span<const int> query,
                                              std::span<const text::TokenSeq> candidates, double tau);

struct DiscriminatorTrainConfig {
  std::size_t epochs = 4;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct DiscriminatorStep {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// Trains group D only (every other group is frozen for the duration and
/// restored afterwards). Each epoch visits every paragraph with >= 2
/// sentences once, drawing its anchor/positive as a random same-paragraph
/// pair.
std::vector<DiscriminatorStep> train_discriminator(StyleCapModel<float>& model,
                                                   std::span<const std::vector<text::TokenSeq>> paragraphs,
                                                   const DiscriminatorTrainConfig& cfg,
                                                   const std::function<void(const DiscriminatorStep&)>& on_step = {});

}  // namespace fscap
