// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "fscap/params.hpp"

namespace fscap {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double default_lr = 5e-4;
  std::map<std::string, double> group_lr;  // overrides default_lr per group
  double clip_norm = 0.0;                  // global gradient-norm clip, 0 = off

  double lr_for(const std::string& group) const;
};

/// Adam with a fixed learning rate per parameter group. Frozen groups are
/// skipped entirely, so their values never change.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore<T>& store, AdamConfig cfg);

  /// Returns the pre-clip global gradient norm over trainable groups.
  double step(ParamStore<T>& store, const Gradients<T>& grads);
  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t steps_ = 0;
};

}  // namespace fscap
