// SPDX-License-Identifier: Apache-2.0
//
// Synthetic visual features and the projection M that turns them into
// content slots for E_c.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fscap/model.hpp"
#include "fscap/text.hpp"

namespace fscap {

/// Frame stack (frames x d_v); a still image is a single frame.
using VisualFeature = Matrix<float>;

/// Frozen random map from content-word counts to feature space.
struct VisualBasis {
  Matrix<float> weight;            // d_v x |V|
  std::vector<unsigned char> content;  // 1 for vocabulary ids that count as content

  static VisualBasis make(std::size_t visual_dim, const text::Vocab& vocab, std::span<const std::string> content_words,
                          std::uint64_t seed);
};

/// weight * bag_of_words(content tokens of y), plus N(0, sigma) noise drawn
/// independently for each of `frames` rows.
VisualFeature synth_visual(std::span<const int> caption, const VisualBasis& basis, double sigma, std::size_t frames,
                           std::mt19937_64& rng);

/// Final hidden states of M at the constant-slot positions of
/// [linear(x); constants] (const_slots x d_model).
template <typename T>
Var project(const StyleCapModel<T>& model, Tape<T>& t, Var x);

struct VisionItem {
  std::string id;
  text::Words caption;
  VisualFeature feature;
};

/// <dir>/<split>.captions.txt holds one caption per line, <split>.features.bin
/// concatenates (u32 rows, u32 cols, rows*cols f32) records, and
/// <split>.manifest.tsv maps "id, caption line, byte offset".
void write_vision_split(const std::filesystem::path& dir, const std::string& split, std::span<const VisionItem> items);
std::vector<VisionItem> read_vision_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace fscap
