// SPDX-License-Identifier: Apache-2.0
//
// Little-endian array blobs and atomic file/directory replacement.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fscap::io {

void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);
void write_f32(std::ostream& out, std::span<const float> values);
std::vector<float> read_f32(std::istream& in, std::size_t count);

/// Write `contents` to path.tmp, then rename over path.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

/// Replace directory `target` with the fully written directory `staged`.
void atomic_replace_dir(const std::filesystem::path& staged, const std::filesystem::path& target);

std::string read_file(const std::filesystem::path& path);

}  // namespace fscap::io
