// SPDX-License-Identifier: Apache-2.0
//
// Flat "key = value" documents used for configs, synthesis specs and
// manifests. Blank lines and lines starting with '#' are ignored; entry order
// is preserved.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fscap {

class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, const std::string& origin = "<string>");
  /// Throws std::runtime_error naming the path when it cannot be read.
  static KeyValueFile load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string to_string() const;

  bool has(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;
  std::string get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<std::string> get_list(std::string_view key) const;

  /// Replace the value of an existing key in place, or append.
  void set(std::string_view key, std::string value);
  template <typename N>
  void set_number(std::string_view key, N v) {
    set(key, format_number(static_cast<double>(v)));
  }
  /// Overlay every entry of `other` onto this document.
  void merge(const KeyValueFile& other);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, std::string>> with_prefix(std::string_view prefix) const;

  static std::string format_number(double v);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_;
};

std::vector<std::string> split_list(std::string_view s, char sep = ',');
std::string trim(std::string_view s);

}  // namespace fscap
