// SPDX-License-Identifier: Apache-2.0
#include "fscap/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fscap/binary_io.hpp"

namespace fscap {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  auto staged = dir;
  staged += ".staging";
  fs::remove_all(staged);
  fs::create_directories(staged / "params");

  KeyValueFile kv;
  ckpt.model.arch().write(kv);
  kv.set_number("step", ckpt.step);
  const auto& store = ckpt.model.params();
  std::vector<std::string> names;
  for (const auto& g : store.groups()) {
    names.push_back(g.name);
    kv.set("group." + g.name + ".frozen", g.frozen ? "true" : "false");
  }
  kv.set("groups", [&] {
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ",") + n;
    return s;
  }());
  kv.set_number("params", store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.params()[i];
    kv.set("param." + std::to_string(i), p.name + " " + std::to_string(p.value.rows()) + " " +
                                              std::to_string(p.value.cols()));
    std::ostringstream blob;
    io::write_f32(blob, p.value.flat());
    io::atomic_write(staged / "params" / (p.name + ".bin"), blob.str());
  }
  for (const auto& [k, v] : ckpt.extra.entries()) kv.set("extra." + k, v);
  kv.save(staged / "manifest.txt");
  ckpt.vocab.save(staged / "vocab.txt");
  io::atomic_replace_dir(staged, dir);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) throw std::runtime_error("cannot read file: " + manifest_path.string());
  KeyValueFile kv = KeyValueFile::load(manifest_path);
  Checkpoint out;
  out.vocab = text::Vocab::load(dir / "vocab.txt");
  out.model = StyleCapModel<float>(Architecture::from_keyvalue(kv));
  out.step = static_cast<std::size_t>(kv.get_int("step", 0));
  auto& store = out.model.params();
  if (out.vocab.size() != out.model.config().vocab_size) {
    throw std::runtime_error(manifest_path.string() + ": vocab.txt size does not match model.vocab_size");
  }
  const auto count = static_cast<std::size_t>(kv.get_int("params", -1));
  if (count != store.size()) throw std::runtime_error(manifest_path.string() + ": parameter count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream row(kv.get("param." + std::to_string(i)));
    std::string name;
    std::size_t r = 0, c = 0;
    row >> name >> r >> c;
    auto& p = store[ParamId{static_cast<std::uint32_t>(i)}];
    if (name != p.name || r != p.value.rows() || c != p.value.cols()) {
      throw std::runtime_error(manifest_path.string() + ": parameter " + std::to_string(i) + " is '" + name + "' " +
                               shape_string(r, c) + ", expected '" + p.name + "' " +
                               shape_string(p.value.rows(), p.value.cols()));
    }
    const auto blob_path = dir / "params" / (name + ".bin");
    std::istringstream blob(io::read_file(blob_path));
    auto values = io::read_f32(blob, r * c);
    if (blob.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing data in " + blob_path.string());
    std::copy(values.begin(), values.end(), p.value.data());
  }
  for (const auto& g : split_list(kv.get("groups"))) store.set_frozen(g, kv.get_bool("group." + g + ".frozen", false));
  for (const auto& [k, v] : kv.with_prefix("extra.")) out.extra.set(k, v);
  return out;
}

}  // namespace fscap
