// SPDX-License-Identifier: Apache-2.0
#include "fscap/model.hpp"

#include <random>
#include <stdexcept>

namespace fscap {

namespace {

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw std::invalid_argument(std::string(what) + " must be >= 1");
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(vocab_size, "model.vocab_size");
  require_positive(d_model, "model.d_model");
  require_positive(heads, "model.heads");
  require_positive(ff_dim, "model.ff_dim");
  require_positive(encoder_layers, "model.encoder_layers");
  require_positive(decoder_layers, "model.decoder_layers");
  require_positive(max_positions, "model.max_positions");
  if (d_model % heads != 0) {
    throw std::invalid_argument("model.d_model (" + std::to_string(d_model) + ") not divisible by model.heads (" +
                                std::to_string(heads) + ")");
  }
  if (vocab_size <= static_cast<std::size_t>(text::kReservedCount)) {
    throw std::invalid_argument("model.vocab_size must exceed the reserved token count");
  }
}

void DiscriminatorConfig::validate() const {
  require_positive(d_model, "disc.d_model");
  require_positive(heads, "disc.heads");
  require_positive(ff_dim, "disc.ff_dim");
  require_positive(layers, "disc.layers");
  if (d_model % heads != 0) throw std::invalid_argument("disc.d_model not divisible by disc.heads");
  if (!(temperature > 0.0)) throw std::invalid_argument("disc.temperature must be > 0");
}

void ProjectionConfig::validate() const {
  require_positive(visual_dim, "proj.visual_dim");
  require_positive(const_slots, "proj.const_slots");
  require_positive(max_frames, "proj.max_frames");
  require_positive(ff_dim, "proj.ff_dim");
  require_positive(layers, "proj.layers");
}

void Architecture::validate() const {
  model.validate();
  discriminator.validate();
  projection.validate();
  if (projection.const_slots + projection.max_frames > model.max_positions) {
    throw std::invalid_argument("proj.const_slots + proj.max_frames exceeds model.max_positions");
  }
}

Architecture Architecture::from_keyvalue(const KeyValueFile& kv) {
  Architecture a;
  auto sz = [&kv](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw std::invalid_argument(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  a.model.vocab_size = sz("model.vocab_size", a.model.vocab_size);
  a.model.d_model = sz("model.d_model", a.model.d_model);
  a.model.heads = sz("model.heads", a.model.heads);
  a.model.ff_dim = sz("model.ff_dim", a.model.ff_dim);
  a.model.encoder_layers = sz("model.encoder_layers", a.model.encoder_layers);
  a.model.decoder_layers = sz("model.decoder_layers", a.model.decoder_layers);
  a.model.max_positions = sz("model.max_positions", a.model.max_positions);
  a.model.seed = static_cast<std::uint64_t>(kv.get_int("model.seed", static_cast<std::int64_t>(a.model.seed)));
  a.discriminator.d_model = sz("disc.d_model", a.discriminator.d_model);
  a.discriminator.heads = sz("disc.heads", a.discriminator.heads);
  a.discriminator.ff_dim = sz("disc.ff_dim", a.discriminator.ff_dim);
  a.discriminator.layers = sz("disc.layers", a.discriminator.layers);
  a.discriminator.temperature = kv.get_double("disc.temperature", a.discriminator.temperature);
  a.projection.visual_dim = sz("proj.visual_dim", a.projection.visual_dim);
  a.projection.const_slots = sz("proj.const_slots", a.projection.const_slots);
  a.projection.max_frames = sz("proj.max_frames", a.projection.max_frames);
  a.projection.ff_dim = sz("proj.ff_dim", a.projection.ff_dim);
  a.projection.layers = sz("proj.layers", a.projection.layers);
  return a;
}

void Architecture::write(KeyValueFile& kv) const {
  kv.set_number("model.vocab_size", model.vocab_size);
  kv.set_number("model.d_model", model.d_model);
  kv.set_number("model.heads", model.heads);
  kv.set_number("model.ff_dim", model.ff_dim);
  kv.set_number("model.encoder_layers", model.encoder_layers);
  kv.set_number("model.decoder_layers", model.decoder_layers);
  kv.set_number("model.max_positions", model.max_positions);
  kv.set_number("model.seed", model.seed);
  kv.set_number("disc.d_model", discriminator.d_model);
  kv.set_number("disc.heads", discriminator.heads);
  kv.set_number("disc.ff_dim", discriminator.ff_dim);
  kv.set_number("disc.layers", discriminator.layers);
  kv.set_number("disc.temperature", discriminator.temperature);
  kv.set_number("proj.visual_dim", projection.visual_dim);
  kv.set_number("proj.const_slots", projection.const_slots);
  kv.set_number("proj.max_frames", projection.max_frames);
  kv.set_number("proj.ff_dim", projection.ff_dim);
  kv.set_number("proj.layers", projection.layers);
}

// ---------------------------------------------------------------------------

template <typename T>
StyleCapModel<T>::StyleCapModel(const Architecture& arch) : arch_(arch) {
  arch_.validate();
  const auto& mc = arch_.model;
  std::mt19937_64 rng(mc.seed);
  const TransformerDims enc{mc.d_model, mc.heads, mc.ff_dim, mc.encoder_layers};
  const TransformerDims dec{mc.d_model, mc.heads, mc.ff_dim, mc.decoder_layers};

  // Group order fixes the checkpoint layout: E_s, E_c, G, M, D.
  LayerInit<T> style{store_, std::string(group::kStyle), rng};
  LayerInit<T> content{store_, std::string(group::kContent), rng};
  LayerInit<T> gen{store_, std::string(group::kGenerator), rng};
  LayerInit<T> proj{store_, std::string(group::kProjection), rng};
  LayerInit<T> disc{store_, std::string(group::kDiscriminator), rng};

  ids_.style_embed = store_.add(group::kStyle, "embed", Matrix<T>(mc.vocab_size, mc.d_model));
  ids_.style = style.encoder_stack("encoder", enc);
  ids_.content_embed = store_.add(group::kContent, "embed", content.normal(mc.vocab_size, mc.d_model, 1.0));
  ids_.content = content.encoder_stack("encoder", enc);
  store_.copy_group(group::kContent, group::kStyle);

  ids_.gen_embed = store_.add(group::kGenerator, "embed", gen.normal(mc.vocab_size, mc.d_model, 1.0));
  ids_.gen = gen.decoder_stack("decoder", dec);
  ids_.gen_out = gen.linear("out", mc.d_model, mc.vocab_size);

  const auto& pc = arch_.projection;
  ids_.proj_in = proj.linear("in", pc.visual_dim, mc.d_model);
  ids_.proj_consts = store_.add(group::kProjection, "consts", proj.normal(pc.const_slots, mc.d_model, 1.0));
  ids_.proj = proj.encoder_stack("encoder", TransformerDims{mc.d_model, mc.heads, pc.ff_dim, pc.layers});

  const auto& dc = arch_.discriminator;
  ids_.disc_embed = store_.add(group::kDiscriminator, "embed", disc.normal(mc.vocab_size, dc.d_model, 1.0));
  ids_.disc = disc.encoder_stack("encoder", TransformerDims{dc.d_model, dc.heads, dc.ff_dim, dc.layers});

  positions_ = sinusoidal_positions<T>(mc.max_positions, mc.d_model);
  disc_positions_ = sinusoidal_positions<T>(mc.max_positions, dc.d_model);
}

template <typename T>
Var StyleCapModel<T>::positions(Tape<T>& t, std::size_t rows, std::size_t width) const {
  const Matrix<T>& table = width == positions_.cols() ? positions_ : disc_positions_;
  if (table.cols() != width) throw std::invalid_argument("positions: unsupported width");
  if (rows > table.rows()) {
    throw std::invalid_argument("sequence of " + std::to_string(rows) + " positions exceeds model.max_positions (" +
                                std::to_string(table.rows()) + ")");
  }
  Matrix<T> slice(rows, width);
  std::copy(table.data(), table.data() + rows * width, slice.data());
  return t.constant(std::move(slice));
}

template <typename T>
Var StyleCapModel<T>::encode_content(Tape<T>& t, std::span<const int> tokens) const {
  static constexpr int kLoneBos[] = {text::kBos};
  const std::span<const int> ids = tokens.empty() ? std::span<const int>(kLoneBos) : tokens;
  Var x = t.gather_rows(t.param(ids_.content_embed), ids);
  x = t.add(x, positions(t, ids.size(), arch_.model.d_model));
  return encoder_stack(t, x, ids_.content, arch_.model.heads);
}

template <typename T>
Var StyleCapModel<T>::encode_content(Tape<T>& t, Var slots) const {
  const std::size_t rows = t.value(slots).rows();
  const std::size_t cols = t.value(slots).cols();
  if (cols != arch_.model.d_model) {
    throw std::invalid_argument("encode_content: slot width " + std::to_string(cols) + " != d_model " +
                                std::to_string(arch_.model.d_model));
  }
  Var x = t.add(slots, positions(t, rows, arch_.model.d_model));
  return encoder_stack(t, x, ids_.content, arch_.model.heads);
}

template <typename T>
Var StyleCapModel<T>::style_states(Tape<T>& t, std::span<const int> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("extract_style: empty input");
  Var x = t.gather_rows(t.param(ids_.style_embed), tokens);
  x = t.add(x, positions(t, tokens.size(), arch_.model.d_model));
  return encoder_stack(t, x, ids_.style, arch_.model.heads);
}

template <typename T>
Var StyleCapModel<T>::extract_style(Tape<T>& t, std::span<const int> tokens) const {
  return t.mean_rows(style_states(t, tokens));
}

template <typename T>
Var StyleCapModel<T>::decode_logits(Tape<T>& t, Var fused, std::span<const int> prefix) const {
  if (t.value(fused).cols() != arch_.model.d_model) throw std::invalid_argument("decode_logits: memory width");
  if (prefix.empty()) throw std::invalid_argument("decode_logits: empty prefix");
  Var x = t.gather_rows(t.param(ids_.gen_embed), prefix);
  x = t.add(x, positions(t, prefix.size(), arch_.model.d_model));
  Var h = decoder_stack(t, x, fused, ids_.gen, arch_.model.heads);
  return linear(t, h, ids_.gen_out);
}

template <typename T>
text::TokenSeq StyleCapModel<T>::greedy_decode(const Matrix<T>& fused, std::size_t max_len) const {
  max_len = std::min(max_len, arch_.model.max_positions - 1);
  text::TokenSeq prefix{text::kBos};
  for (std::size_t step = 0; step < max_len; ++step) {
    Tape<T> t(&store_, nullptr, false);
    Var mem = t.constant(fused);
    const auto& logits = t.value(decode_logits(t, mem, prefix));
    auto last = logits.row(logits.rows() - 1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < last.size(); ++j) {
      if (last[j] > last[best]) best = j;
    }
    if (static_cast<int>(best) == text::kEos) break;
    prefix.push_back(static_cast<int>(best));
  }
  return text::TokenSeq(prefix.begin() + 1, prefix.end());
}

template <typename T>
Var fuse(Tape<T>& t, Var content, Var style) {
  return t.add_row(content, style);
}

template <typename T>
Var sequence_cross_entropy(Tape<T>& t, Var logits, std::span<const int> targets) {
  return t.cross_entropy(logits, targets);
}

text::TokenSeq decoder_input(std::span<const int> tokens) {
  text::TokenSeq out{text::kBos};
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

text::TokenSeq decoder_target(std::span<const int> tokens) {
  text::TokenSeq out(tokens.begin(), tokens.end());
  out.push_back(text::kEos);
  return out;
}

template class StyleCapModel<float>;
template class StyleCapModel<double>;
template Var fuse<float>(Tape<float>&, Var, Var);
template Var fuse<double>(Tape<double>&, Var, Var);
template Var sequence_cross_entropy<float>(Tape<float>&, Var, std::span<const int>);
template Var sequence_cross_entropy<double>(Tape<double>&, Var, std::span<const int>);

}  // namespace fscap
