// SPDX-License-Identifier: Apache-2.0
#include "fscap/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fscap::io {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::uint32_t le = to_le(v);
  out.write(reinterpret_cast<const char*>(&le), sizeof(le));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t le = 0;
  if (!in.read(reinterpret_cast<char*>(&le), sizeof(le))) throw std::runtime_error("truncated binary data");
  return to_le(le);
}

void write_f32(std::ostream& out, std::span<const float> values) {
  for (float f : values) write_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<float> read_f32(std::istream& in, std::size_t count) {
  std::vector<float> out(count);
  for (auto& f : out) f = std::bit_cast<float>(read_u32(in));
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void atomic_replace_dir(const std::filesystem::path& staged, const std::filesystem::path& target) {
  namespace fs = std::filesystem;
  if (fs::exists(target)) {
    auto old = target;
    old += ".old";
    fs::remove_all(old);
    fs::rename(target, old);
    fs::rename(staged, target);
    fs::remove_all(old);
  } else {
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::rename(staged, target);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fscap::io
