// SPDX-License-Identifier: Apache-2.0
#include "fscap/optimizer.hpp"

#include <cmath>

namespace fscap {

double AdamConfig::lr_for(const std::string& group) const {
  auto it = group_lr.find(group);
  return it == group_lr.end() ? default_lr : it->second;
}

template <typename T>
Adam<T>::Adam(const ParamStore<T>& store, AdamConfig cfg) : cfg_(std::move(cfg)) {
  m_.resize(store.size());
  v_.resize(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto n = store.params()[i].value.size();
    m_[i].assign(n, 0.0);
    v_[i].assign(n, 0.0);
  }
}

template <typename T>
double Adam<T>::step(ParamStore<T>& store, const Gradients<T>& grads) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ParamId id{static_cast<std::uint32_t>(i)};
    if (!store.trainable(id)) continue;
    for (T g : grads[id].flat()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ParamId id{static_cast<std::uint32_t>(i)};
    if (!store.trainable(id)) continue;
    auto& p = store[id];
    const double lr = cfg_.lr_for(store.groups()[p.group].name);
    auto g = grads[id].flat();
    auto w = p.value.flat();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = static_cast<double>(g[j]) * clip;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double update = lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      w[j] = static_cast<T>(static_cast<double>(w[j]) - update);
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fscap
