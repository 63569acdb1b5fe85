// SPDX-License-Identifier: Apache-2.0
//
// The conditional encoder-decoder: content extractor E_c, style extractor E_s
// (mean-pooled), generator G that reads content vectors with the style vector
// added to each position. The same parameter store also carries the visual
// projection M and the style discriminator D so that one checkpoint holds the
// whole system.
#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "fscap/autodiff.hpp"
#include "fscap/keyvalue.hpp"
#include "fscap/layers.hpp"
#include "fscap/params.hpp"
#include "fscap/text.hpp"

namespace fscap {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t max_positions = 40;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DiscriminatorConfig {
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t ff_dim = 64;
  std::size_t layers = 1;
  double temperature = 0.1;

  void validate() const;
};

struct ProjectionConfig {
  std::size_t visual_dim = 32;
  std::size_t const_slots = 8;
  std::size_t max_frames = 4;
  std::size_t ff_dim = 128;
  std::size_t layers = 1;

  void validate() const;
};

struct Architecture {
  ModelConfig model;
  DiscriminatorConfig discriminator;
  ProjectionConfig projection;

  void validate() const;
  /// Keys are prefixed "model.", "disc." and "proj.".
  static Architecture from_keyvalue(const KeyValueFile& kv);
  void write(KeyValueFile& kv) const;
};

struct ModelIds {
  ParamId content_embed;
  EncoderStackIds content;
  ParamId style_embed;
  EncoderStackIds style;
  ParamId gen_embed;
  DecoderStackIds gen;
  LinearIds gen_out;
  LinearIds proj_in;
  ParamId proj_consts;
  EncoderStackIds proj;
  ParamId disc_embed;
  EncoderStackIds disc;
};

template <typename T>
class StyleCapModel {
 public:
  using Ids = ModelIds;

  StyleCapModel() = default;
  /// Seeded initialization; E_s starts as an exact copy of E_c. Throws
  /// std::invalid_argument on an invalid architecture.
  explicit StyleCapModel(const Architecture& arch);

  const Architecture& arch() const { return arch_; }
  const ModelConfig& config() const { return arch_.model; }
  const Ids& ids() const { return ids_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  void set_frozen(std::string_view group_name, bool frozen) { store_.set_frozen(group_name, frozen); }

  /// Positions table for a stack of the given width.
  Var positions(Tape<T>& t, std::size_t rows, std::size_t width) const;

  /// E_c over token ids; an empty sequence is encoded as a lone BOS.
  Var encode_content(Tape<T>& t, std::span<const int> tokens) const;
  /// E_c over precomputed slot vectors (rows x d_model).
  Var encode_content(Tape<T>& t, Var slots) const;
  /// Per-position E_s hidden states.
  Var style_states(Tape<T>& t, std::span<const int> tokens) const;
  /// Mean over positions of the E_s hidden states (1 x d_model).
  Var extract_style(Tape<T>& t, std::span<const int> tokens) const;
  /// Logits (prefix.size() x vocab) for a decoder input that starts with BOS.
  Var decode_logits(Tape<T>& t, Var fused, std::span<const int> prefix) const;
  /// Argmax rollout from BOS; stops at EOS or after max_len tokens. Ties go
  /// to the lowest id. The returned sequence excludes BOS and EOS.
  text::TokenSeq greedy_decode(const Matrix<T>& fused, std::size_t max_len) const;

  template <typename U>
  StyleCapModel<U> cast() const {
    StyleCapModel<U> out;
    out.arch_ = arch_;
    out.ids_ = ids_;
    out.store_ = store_.template cast<U>();
    out.positions_ = positions_.template cast<U>();
    out.disc_positions_ = disc_positions_.template cast<U>();
    return out;
  }

 private:
  template <typename U>
  friend class StyleCapModel;

  Architecture arch_;
  Ids ids_;
  ParamStore<T> store_;
  Matrix<T> positions_;
  Matrix<T> disc_positions_;
};

/// content[i] + style for every position i.
template <typename T>
Var fuse(Tape<T>& t, Var content, Var style);

/// Summed token negative log-likelihood; negative targets (PAD) are skipped.
template <typename T>
Var sequence_cross_entropy(Tape<T>& t, Var logits, std::span<const int> targets);

/// Decoder input [BOS, w...] and targets [w..., EOS] for a sentence.
text::TokenSeq decoder_input(std::span<const int> tokens);
text::TokenSeq decoder_target(std::span<const int> tokens);

}  // namespace fscap
