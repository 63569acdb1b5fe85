// SPDX-License-Identifier: Apache-2.0
//
// Named, freezable parameter groups and their gradient buffers.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fscap/matrix.hpp"

namespace fscap {

/// Canonical group names. E_s and E_c are the style/content encoders, G the
/// generator, M the visual projection and D the style discriminator.
namespace group {
inline constexpr std::string_view kStyle = "E_s";
inline constexpr std::string_view kContent = "E_c";
inline constexpr std::string_view kGenerator = "G";
inline constexpr std::string_view kProjection = "M";
inline constexpr std::string_view kDiscriminator = "D";
}  // namespace group

struct ParamId {
  std::uint32_t index = 0;
};

template <typename T>
struct Param {
  std::string name;  // unique within the store, "<group>.<path>"
  std::size_t group = 0;
  Matrix<T> value;
};

struct GroupInfo {
  std::string name;
  bool frozen = false;
  std::vector<std::uint32_t> members;
};

template <typename T>
class ParamStore {
 public:
  ParamId add(std::string_view group_name, const std::string& local_name, Matrix<T> init);

  Param<T>& operator[](ParamId id) { return params_[id.index]; }
  const Param<T>& operator[](ParamId id) const { return params_[id.index]; }
  std::size_t size() const { return params_.size(); }
  std::span<Param<T>> params() { return params_; }
  std::span<const Param<T>> params() const { return params_; }
  const std::vector<GroupInfo>& groups() const { return groups_; }

  bool has_group(std::string_view name) const;
  const GroupInfo& group(std::string_view name) const;
  /// Throws std::invalid_argument for an unknown group name.
  void set_frozen(std::string_view name, bool frozen);
  bool is_frozen(std::string_view name) const { return group(name).frozen; }
  bool trainable(ParamId id) const { return !groups_[params_[id.index].group].frozen; }

  std::size_t scalar_count() const;
  std::size_t scalar_count(std::string_view group_name) const;

  /// Copy every array of group `from` onto group `to`; shapes must match
  /// member-by-member.
  void copy_group(std::string_view from, std::string_view to);

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.groups_ = groups_;
    out.params_.reserve(params_.size());
    for (const auto& p : params_) out.params_.push_back(Param<U>{p.name, p.group, p.value.template cast<U>()});
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.params_.size() != b.params_.size() || a.groups_.size() != b.groups_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) return false;
    }
    return true;
  }

 private:
  template <typename U>
  friend class ParamStore;

  std::size_t group_index(std::string_view name, bool create);

  std::vector<GroupInfo> groups_;
  std::vector<Param<T>> params_;
};

/// Gradient accumulators shaped like a ParamStore. Only trainable entries are
/// ever written; frozen entries stay zero.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore<T>& store);

  Matrix<T>& operator[](ParamId id) { return grads_[id.index]; }
  const Matrix<T>& operator[](ParamId id) const { return grads_[id.index]; }
  std::size_t size() const { return grads_.size(); }
  void zero();
  void scale(T s);
  /// L2 norm over the members of one group.
  double group_norm(const ParamStore<T>& store, std::string_view group_name) const;

 private:
  std::vector<Matrix<T>> grads_;
};

}  // namespace fscap
