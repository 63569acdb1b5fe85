// SPDX-License-Identifier: Apache-2.0
#include "fscap/visual.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fscap/binary_io.hpp"
#include "fscap/keyvalue.hpp"

namespace fscap {

VisualBasis VisualBasis::make(std::size_t visual_dim, const text::Vocab& vocab,
                              std::span<const std::string> content_words, std::uint64_t seed) {
  VisualBasis b;
  b.weight = Matrix<float>(visual_dim, vocab.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& w : b.weight.flat()) w = static_cast<float>(n(rng));
  b.content.assign(vocab.size(), 0);
  for (const auto& w : content_words) {
    if (vocab.contains(w)) b.content[static_cast<std::size_t>(vocab.id(w))] = 1;
  }
  return b;
}

VisualFeature synth_visual(std::span<const int> caption, const VisualBasis& basis, double sigma, std::size_t frames,
                           std::mt19937_64& rng) {
  const std::size_t dv = basis.weight.rows();
  std::vector<double> clean(dv, 0.0);
  for (int id : caption) {
    if (id < 0 || static_cast<std::size_t>(id) >= basis.content.size() || !basis.content[id]) continue;
    for (std::size_t r = 0; r < dv; ++r) clean[r] += basis.weight(r, id);
  }
  VisualFeature out(frames, dv);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t r = 0; r < dv; ++r) {
      out(f, r) = static_cast<float>(clean[r] + (sigma > 0.0 ? sigma * noise(rng) : 0.0));
    }
  }
  return out;
}

template <typename T>
Var project(const StyleCapModel<T>& model, Tape<T>& t, Var x) {
  const auto& pc = model.arch().projection;
  const std::size_t frames = t.value(x).rows();
  const std::size_t width = t.value(x).cols();
  if (width != pc.visual_dim) {
    throw std::invalid_argument("project: feature width " + std::to_string(width) + " != proj.visual_dim " +
                                std::to_string(pc.visual_dim));
  }
  if (frames == 0 || frames > pc.max_frames) {
    throw std::invalid_argument("project: frame count must be in [1, proj.max_frames]");
  }
  const auto& ids = model.ids();
  const std::size_t d = model.config().d_model;
  Var seq = t.concat_rows(linear(t, x, ids.proj_in), t.param(ids.proj_consts));
  const std::size_t n = frames + pc.const_slots;
  seq = t.add(seq, model.positions(t, n, d));
  Var h = encoder_stack(t, seq, ids.proj, model.config().heads);
  return t.slice_rows(h, frames, n);
}

void write_vision_split(const std::filesystem::path& dir, const std::string& split, std::span<const VisionItem> items) {
  std::filesystem::create_directories(dir);
  std::ostringstream captions, blob, manifest;
  manifest << "id\tline\toffset\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (it.id.find_first_of("\t\n") != std::string::npos) throw std::invalid_argument("vision item id has a tab");
    manifest << it.id << '\t' << i + 1 << '\t' << blob.tellp() << '\n';
    captions << text::join(it.caption) << '\n';
    io::write_u32(blob, static_cast<std::uint32_t>(it.feature.rows()));
    io::write_u32(blob, static_cast<std::uint32_t>(it.feature.cols()));
    io::write_f32(blob, it.feature.flat());
  }
  io::atomic_write(dir / (split + ".captions.txt"), captions.str());
  io::atomic_write(dir / (split + ".features.bin"), blob.str());
  io::atomic_write(dir / (split + ".manifest.tsv"), manifest.str());
}

std::vector<VisionItem> read_vision_split(const std::filesystem::path& dir, const std::string& split) {
  std::vector<std::string> lines;
  {
    std::istringstream in(io::read_file(dir / (split + ".captions.txt")));
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  }
  std::istringstream blob(io::read_file(dir / (split + ".features.bin")));
  std::istringstream manifest(io::read_file(dir / (split + ".manifest.tsv")));
  std::vector<VisionItem> out;
  std::string row;
  std::getline(manifest, row);
  while (std::getline(manifest, row)) {
    if (row.empty()) continue;
    auto cols = split_list(row, '\t');
    if (cols.size() != 3) throw std::runtime_error("malformed vision manifest row: " + row);
    const std::size_t line = std::stoul(cols[1]);
    if (line == 0 || line > lines.size()) throw std::runtime_error("vision manifest line out of range: " + row);
    blob.clear();
    blob.seekg(static_cast<std::streamoff>(std::stoull(cols[2])));
    const auto r = io::read_u32(blob);
    const auto c = io::read_u32(blob);
    VisionItem it;
    it.id = cols[0];
    it.caption = text::normalize(lines[line - 1], 1u << 20).tokens;
    it.feature = Matrix<float>(r, c, io::read_f32(blob, static_cast<std::size_t>(r) * c));
    out.push_back(std::move(it));
  }
  return out;
}

template Var project<float>(const StyleCapModel<float>&, Tape<float>&, Var);
template Var project<double>(const StyleCapModel<double>&, Tape<double>&, Var);

}  // namespace fscap
