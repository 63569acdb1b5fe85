// SPDX-License-Identifier: Apache-2.0
#include "fscap/params.hpp"

#include <cmath>

namespace fscap {

template <typename T>
std::size_t ParamStore<T>::group_index(std::string_view name, bool create) {
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].name == name) return i;
  }
  if (!create) throw std::invalid_argument("unknown parameter group: " + std::string(name));
  groups_.push_back(GroupInfo{std::string(name), false, {}});
  return groups_.size() - 1;
}

template <typename T>
ParamId ParamStore<T>::add(std::string_view group_name, const std::string& local_name, Matrix<T> init) {
  const std::size_t g = group_index(group_name, true);
  std::string full = std::string(group_name) + "." + local_name;
  for (const auto& p : params_) {
    if (p.name == full) throw std::invalid_argument("duplicate parameter: " + full);
  }
  const auto idx = static_cast<std::uint32_t>(params_.size());
  params_.push_back(Param<T>{std::move(full), g, std::move(init)});
  groups_[g].members.push_back(idx);
  return ParamId{idx};
}

template <typename T>
bool ParamStore<T>::has_group(std::string_view name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return true;
  }
  return false;
}

template <typename T>
const GroupInfo& ParamStore<T>::group(std::string_view name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw std::invalid_argument("unknown parameter group: " + std::string(name));
}

template <typename T>
void ParamStore<T>::set_frozen(std::string_view name, bool frozen) {
  groups_[group_index(name, false)].frozen = frozen;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count(std::string_view group_name) const {
  std::size_t n = 0;
  for (auto idx : group(group_name).members) n += params_[idx].value.size();
  return n;
}

template <typename T>
void ParamStore<T>::copy_group(std::string_view from, std::string_view to) {
  const auto& src = group(from).members;
  const auto& dst = group(to).members;
  if (src.size() != dst.size()) throw std::invalid_argument("copy_group: member count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto& d = params_[dst[i]].value;
    const auto& s = params_[src[i]].value;
    if (!d.same_shape(s)) throw std::invalid_argument("copy_group: shape mismatch at " + params_[dst[i]].name);
    d = s;
  }
}

template <typename T>
Gradients<T>::Gradients(const ParamStore<T>& store) {
  grads_.reserve(store.size());
  for (const auto& p : store.params()) grads_.emplace_back(p.value.rows(), p.value.cols());
}

template <typename T>
void Gradients<T>::zero() {
  for (auto& g : grads_) g.fill(T{0});
}

template <typename T>
void Gradients<T>::scale(T s) {
  for (auto& g : grads_) {
    for (auto& v : g.flat()) v *= s;
  }
}

template <typename T>
double Gradients<T>::group_norm(const ParamStore<T>& store, std::string_view group_name) const {
  double acc = 0.0;
  for (auto idx : store.group(group_name).members) {
    for (T v : grads_[idx].flat()) acc += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(acc);
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace fscap
