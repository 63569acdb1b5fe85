// SPDX-License-Identifier: Apache-2.0
#include "fscap/layers.hpp"

#include <cmath>

namespace fscap {

template <typename T>
Matrix<T> LayerInit<T>::normal(std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> nd(0.0, stddev);
  Matrix<T> m(rows, cols);
  for (auto& v : m.flat()) v = static_cast<T>(nd(rng));
  return m;
}

template <typename T>
LinearIds LayerInit<T>::linear(const std::string& name, std::size_t in, std::size_t out) {
  LinearIds ids;
  ids.weight = store.add(group, name + ".weight", normal(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
  ids.bias = store.add(group, name + ".bias", Matrix<T>(1, out));
  return ids;
}

template <typename T>
NormIds LayerInit<T>::norm(const std::string& name, std::size_t width) {
  return NormIds{store.add(group, name + ".gamma", Matrix<T>(1, width, T{1})),
                 store.add(group, name + ".beta", Matrix<T>(1, width))};
}

template <typename T>
AttentionIds LayerInit<T>::attention(const std::string& name, std::size_t width) {
  return AttentionIds{linear(name + ".q", width, width), linear(name + ".k", width, width),
                      linear(name + ".v", width, width), linear(name + ".o", width, width)};
}

template <typename T>
FeedForwardIds LayerInit<T>::feed_forward(const std::string& name, std::size_t width, std::size_t hidden) {
  return FeedForwardIds{linear(name + ".in", width, hidden), linear(name + ".out", hidden, width)};
}

template <typename T>
EncoderStackIds LayerInit<T>::encoder_stack(const std::string& name, const TransformerDims& dims) {
  EncoderStackIds ids;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    EncoderLayerIds layer;
    layer.norm1 = norm(p + ".norm1", dims.d_model);
    layer.attn = attention(p + ".attn", dims.d_model);
    layer.norm2 = norm(p + ".norm2", dims.d_model);
    layer.ff = feed_forward(p + ".ff", dims.d_model, dims.ff_dim);
    ids.layers.push_back(layer);
  }
  ids.final_norm = norm(name + ".final_norm", dims.d_model);
  return ids;
}

template <typename T>
DecoderStackIds LayerInit<T>::decoder_stack(const std::string& name, const TransformerDims& dims) {
  DecoderStackIds ids;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    DecoderLayerIds layer;
    layer.norm1 = norm(p + ".norm1", dims.d_model);
    layer.self_attn = attention(p + ".self_attn", dims.d_model);
    layer.norm2 = norm(p + ".norm2", dims.d_model);
    layer.cross_attn = attention(p + ".cross_attn", dims.d_model);
    layer.norm3 = norm(p + ".norm3", dims.d_model);
    layer.ff = feed_forward(p + ".ff", dims.d_model, dims.ff_dim);
    ids.layers.push_back(layer);
  }
  ids.final_norm = norm(name + ".final_norm", dims.d_model);
  return ids;
}

template <typename T>
Var linear(Tape<T>& t, Var x, const LinearIds& ids) {
  return t.add_row(t.matmul(x, t.param(ids.weight)), t.param(ids.bias));
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, const NormIds& ids) {
  return t.layer_norm(x, t.param(ids.gamma), t.param(ids.beta));
}

template <typename T>
Var multi_head_attention(Tape<T>& t, Var queries, Var keys_values, const AttentionIds& ids, std::size_t heads,
                         bool causal) {
  Var q = linear(t, queries, ids.q);
  Var k = linear(t, keys_values, ids.k);
  Var v = linear(t, keys_values, ids.v);
  return linear(t, t.attention(q, k, v, heads, causal), ids.o);
}

template <typename T>
Var encoder_stack(Tape<T>& t, Var x, const EncoderStackIds& ids, std::size_t heads) {
  for (const auto& layer : ids.layers) {
    Var h = layer_norm(t, x, layer.norm1);
    x = t.add(x, multi_head_attention(t, h, h, layer.attn, heads, false));
    h = layer_norm(t, x, layer.norm2);
    x = t.add(x, linear(t, t.gelu(linear(t, h, layer.ff.in)), layer.ff.out));
  }
  return layer_norm(t, x, ids.final_norm);
}

template <typename T>
Var decoder_stack(Tape<T>& t, Var x, Var memory, const DecoderStackIds& ids, std::size_t heads) {
  for (const auto& layer : ids.layers) {
    Var h = layer_norm(t, x, layer.norm1);
    x = t.add(x, multi_head_attention(t, h, h, layer.self_attn, heads, true));
    h = layer_norm(t, x, layer.norm2);
    x = t.add(x, multi_head_attention(t, h, memory, layer.cross_attn, heads, false));
    h = layer_norm(t, x, layer.norm3);
    x = t.add(x, linear(t, t.gelu(linear(t, h, layer.ff.in)), layer.ff.out));
  }
  return layer_norm(t, x, ids.final_norm);
}

template <typename T>
Matrix<T> sinusoidal_positions(std::size_t positions, std::size_t width) {
  Matrix<T> pe(positions, width);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

#define FSCAP_INSTANTIATE(T)                                                                               \
  template struct LayerInit<T>;                                                                             \
  template Var linear<T>(Tape<T>&, Var, const LinearIds&);                                                  \
  template Var layer_norm<T>(Tape<T>&, Var, const NormIds&);                                                \
  template Var multi_head_attention<T>(Tape<T>&, Var, Var, const AttentionIds&, std::size_t, bool);         \
  template Var encoder_stack<T>(Tape<T>&, Var, const EncoderStackIds&, std::size_t);                        \
  template Var decoder_stack<T>(Tape<T>&, Var, Var, const DecoderStackIds&, std::size_t);                   \
  template Matrix<T> sinusoidal_positions<T>(std::size_t, std::size_t);

FSCAP_INSTANTIATE(float)
FSCAP_INSTANTIATE(double)

#undef FSCAP_INSTANTIATE

}  // namespace fscap
