// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fscap/model.hpp"

namespace toy {

inline fscap::Architecture arch(std::uint64_t seed = 1) {
  fscap::Architecture a;
  a.model.vocab_size = 10;
  a.model.d_model = 8;
  a.model.heads = 2;
  a.model.ff_dim = 8;
  a.model.encoder_layers = 1;
  a.model.decoder_layers = 1;
  a.model.max_positions = 16;
  a.model.seed = seed;
  a.discriminator.d_model = 8;
  a.discriminator.heads = 2;
  a.discriminator.ff_dim = 8;
  a.discriminator.layers = 1;
  a.projection.visual_dim = 4;
  a.projection.const_slots = 2;
  a.projection.max_frames = 2;
  a.projection.ff_dim = 8;
  a.projection.layers = 1;
  return a;
}

}  // namespace toy
