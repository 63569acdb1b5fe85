// SPDX-License-Identifier: Apache-2.0
#include "fscap/inference.hpp"

#include <random>
#include <stdexcept>

namespace fscap {

template <typename T>
Matrix<T> target_style(const StyleCapModel<T>& model, std::span<const text::TokenSeq> examples) {
  if (examples.empty()) throw std::invalid_argument("target_style: no example sentences");
  const std::size_t d = model.config().d_model;
  std::vector<double> acc(d, 0.0);
  for (const auto& ex : examples) {
    Tape<T> t(&model.params(), nullptr, false);
    const auto& s = t.value(model.extract_style(t, ex));
    for (std::size_t c = 0; c < d; ++c) acc[c] += static_cast<double>(s(0, c));
  }
  Matrix<T> out(1, d);
  for (std::size_t c = 0; c < d; ++c) out(0, c) = static_cast<T>(acc[c] / static_cast<double>(examples.size()));
  return out;
}

template <typename T>
Matrix<T> source_style(const StyleCapModel<T>& model, std::span<const text::TokenSeq> factual_refs) {
  if (factual_refs.empty()) throw std::invalid_argument("source_style: empty factual reference set");
  return target_style(model, factual_refs);
}

template <typename T>
Matrix<T> style_delta(const Matrix<T>& s_tgt, const Matrix<T>& s_src, double lambda) {
  if (!s_tgt.same_shape(s_src)) {
    throw std::invalid_argument("style_delta: width mismatch " + shape_string(s_tgt.rows(), s_tgt.cols()) + " vs " +
                                shape_string(s_src.rows(), s_src.cols()));
  }
  const T l = static_cast<T>(lambda);
  const T keep = static_cast<T>(1.0 - lambda);
  Matrix<T> out(s_src.rows(), s_src.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] = keep * s_src.flat()[i] + l * s_tgt.flat()[i];
  return out;
}

template <typename T>
text::TokenSeq caption(const StyleCapModel<T>& model, const VisualFeature& x, const Matrix<T>& style,
                       const DecodeConfig& cfg) {
  Tape<T> t(&model.params(), nullptr, false);
  Var content = model.encode_content(t, project(model, t, t.constant(x.template cast<T>())));
  return model.greedy_decode(t.value(fuse(t, content, t.constant(style))), cfg.max_len);
}

template <typename T>
text::TokenSeq transfer(const StyleCapModel<T>& model, std::span<const int> tokens, const Matrix<T>& style,
                        double p_infer, std::uint64_t seed, const DecodeConfig& cfg) {
  text::TokenSeq input(tokens.begin(), tokens.end());
  if (p_infer > 0.0) input = text::corrupt(input, text::NoiseConfig{p_infer, seed});
  Tape<T> t(&model.params(), nullptr, false);
  Var content = model.encode_content(t, input);
  return model.greedy_decode(t.value(fuse(t, content, t.constant(style))), cfg.max_len);
}

#define FSCAP_INSTANTIATE(T)                                                                                    \
  template Matrix<T> target_style<T>(const StyleCapModel<T>&, std::span<const text::TokenSeq>);                 \
  template Matrix<T> source_style<T>(const StyleCapModel<T>&, std::span<const text::TokenSeq>);                 \
  template Matrix<T> style_delta<T>(const Matrix<T>&, const Matrix<T>&, double);                                \
  template text::TokenSeq caption<T>(const StyleCapModel<T>&, const VisualFeature&, const Matrix<T>&,          \
                                     const DecodeConfig&);                                                      \
  template text::TokenSeq transfer<T>(const StyleCapModel<T>&, std::span<const int>, const Matrix<T>&, double, \
                                      std::uint64_t, const DecodeConfig&);

FSCAP_INSTANTIATE(float)
FSCAP_INSTANTIATE(double)

#undef FSCAP_INSTANTIATE

}  // namespace fscap
