// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory: manifest.txt (architecture, groups, frozen flags,
// parameter shapes, step), vocab.txt, and one little-endian float32 blob per
// parameter under params/. Writes go to a staging directory that is renamed
// into place.
#pragma once

#include <filesystem>

#include "fscap/keyvalue.hpp"
#include "fscap/model.hpp"
#include "fscap/text.hpp"

namespace fscap {

struct Checkpoint {
  StyleCapModel<float> model;
  text::Vocab vocab;
  std::size_t step = 0;
  KeyValueFile extra;  // "extra." keys of the manifest, prefix stripped
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
/// Throws std::runtime_error naming the offending file on any mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace fscap
