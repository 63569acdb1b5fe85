// SPDX-License-Identifier: Apache-2.0
//
// Few-shot stylized generation: style vectors from example sentences, the
// delta rule, and greedy captioning / text transfer.
#pragma once

#include <cstdint>
#include <span>

#include "fscap/model.hpp"
#include "fscap/text.hpp"
#include "fscap/visual.hpp"

namespace fscap {

/// Mean of extract_style over the examples (1 x d_model). Throws
/// std::invalid_argument on an empty set.
template <typename T>
Matrix<T> target_style(const StyleCapModel<T>& model, std::span<const text::TokenSeq> examples);

/// Same contract, over a factual reference set.
template <typename T>
Matrix<T> source_style(const StyleCapModel<T>& model, std::span<const text::TokenSeq> factual_refs);

/// lambda * (s_tgt - s_src) + s_src, evaluated as (1 - lambda) * s_src +
/// lambda * s_tgt so that lambda = 0 and lambda = 1 return the endpoints
/// exactly.
template <typename T>
Matrix<T> style_delta(const Matrix<T>& s_tgt, const Matrix<T>& s_src, double lambda);

struct DecodeConfig {
  std::size_t max_len = text::kDefaultMaxLen;
};

/// greedy_decode(fuse(E_c(project(x)), s)).
template <typename T>
text::TokenSeq caption(const StyleCapModel<T>& model, const VisualFeature& x, const Matrix<T>& style,
                       const DecodeConfig& cfg = {});

/// greedy_decode(fuse(E_c(corrupt(t, p_infer)), s)); p_infer = 0 skips the
/// corruption entirely.
template <typename T>
text::TokenSeq transfer(const StyleCapModel<T>& model, std::span<const int> tokens, const Matrix<T>& style,
                        double p_infer = 0.0, std::uint64_t seed = 0, const DecodeConfig& cfg = {});

}  // namespace fscap
