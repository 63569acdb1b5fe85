// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer blocks on top of the Tape. Parameters are registered
// in a ParamStore under one group; the *Ids structs remember where.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "fscap/autodiff.hpp"
#include "fscap/params.hpp"

namespace fscap {

struct TransformerDims {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  std::size_t layers = 2;
};

struct LinearIds {
  ParamId weight, bias;  // weight is (in x out), bias (1 x out)
};

struct NormIds {
  ParamId gamma, beta;
};

struct AttentionIds {
  LinearIds q, k, v, o;
};

struct FeedForwardIds {
  LinearIds in, out;
};

struct EncoderLayerIds {
  NormIds norm1;
  AttentionIds attn;
  NormIds norm2;
  FeedForwardIds ff;
};

struct DecoderLayerIds {
  NormIds norm1;
  AttentionIds self_attn;
  NormIds norm2;
  AttentionIds cross_attn;
  NormIds norm3;
  FeedForwardIds ff;
};

struct EncoderStackIds {
  std::vector<EncoderLayerIds> layers;
  NormIds final_norm;
};

struct DecoderStackIds {
  std::vector<DecoderLayerIds> layers;
  NormIds final_norm;
};

template <typename T>
struct LayerInit {
  ParamStore<T>& store;
  std::string group;
  std::mt19937_64& rng;

  Matrix<T> normal(std::size_t rows, std::size_t cols, double stddev);
  LinearIds linear(const std::string& name, std::size_t in, std::size_t out);
  NormIds norm(const std::string& name, std::size_t width);
  AttentionIds attention(const std::string& name, std::size_t width);
  FeedForwardIds feed_forward(const std::string& name, std::size_t width, std::size_t hidden);
  EncoderStackIds encoder_stack(const std::string& name, const TransformerDims& dims);
  DecoderStackIds decoder_stack(const std::string& name, const TransformerDims& dims);
};

template <typename T>
Var linear(Tape<T>& t, Var x, const LinearIds& ids);

template <typename T>
Var layer_norm(Tape<T>& t, Var x, const NormIds& ids);

template <typename T>
Var multi_head_attention(Tape<T>& t, Var queries, Var keys_values, const AttentionIds& ids, std::size_t heads,
                         bool causal);

/// Runs every layer and the final norm. x is (positions x d_model).
template <typename T>
Var encoder_stack(Tape<T>& t, Var x, const EncoderStackIds& ids, std::size_t heads);

/// Causal self-attention over x plus cross-attention over memory.
template <typename T>
Var decoder_stack(Tape<T>& t, Var x, Var memory, const DecoderStackIds& ids, std::size_t heads);

/// Fixed sinusoidal position table (positions x width).
template <typename T>
Matrix<T> sinusoidal_positions(std::size_t positions, std::size_t width);

}  // namespace fscap
