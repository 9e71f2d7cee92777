// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/optim.hpp"

#include <cmath>
#include <numbers>

namespace c2f {

void OptimConfig::validate() const {
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw Error("betas must lie in [0, 1)");
  if (!(lr_train > 0) || !(lr_finetune > 0)) throw Error("learning rates must be positive");
  if (weight_decay < 0 || eps < 0) throw Error("weight decay and eps must be non-negative");
}

double lr_at_step(const OptimConfig& cfg, std::uint64_t step, double base_lr) {
  if (step == 0) throw Error("steps count from 1");
  if (step <= cfg.warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (cfg.schedule == LrSchedule::kCosine && cfg.total_steps > cfg.warmup_steps) {
    const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / span);
    return cfg.min_lr + 0.5 * (base_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
  }
  return base_lr;
}

template <typename T>
void novograd_step(BasicModel<T>& model, const GradientBag<T>& grads, OptimState& state, const OptimConfig& cfg,
                   double lr) {
  // Validate everything before touching any tensor.
  std::size_t expected = 0;
  for (const auto& t : model.tensors()) {
    if (!t.trainable || !t.is_parameter()) continue;
    ++expected;
    auto it = grads.find(t.name);
    if (it == grads.end()) throw Error("missing gradient for trainable tensor '" + t.name + "'");
    if (it->second.size() != t.values.size()) throw Error("gradient size mismatch for '" + t.name + "'");
    for (T g : it->second)
      if (!std::isfinite(static_cast<double>(g))) throw Error("non-finite gradient for '" + t.name + "'");
  }
  if (grads.size() != expected) throw Error("gradient supplied for a frozen or unknown tensor");

  for (auto& t : model.tensors()) {
    if (!t.trainable || !t.is_parameter()) continue;
    const auto& g = grads.at(t.name);
    double norm2 = 0.0;
    for (T v : g) norm2 += static_cast<double>(v) * static_cast<double>(v);
    auto& mom = state.moments[t.name];
    if (!mom.initialized) {
      mom.v = norm2;
      mom.m.assign(t.values.size(), 0.0);
    } else {
      mom.v = cfg.beta2 * mom.v + (1.0 - cfg.beta2) * norm2;
    }
    const double denom = std::sqrt(mom.v) + cfg.eps;
    const double decay = mom.initialized ? cfg.beta1 : 0.0;
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const double w = static_cast<double>(t.values[i]);
      const double normalized = denom > 0.0 ? static_cast<double>(g[i]) / denom : 0.0;
      const double update = normalized + cfg.weight_decay * w;
      mom.m[i] = decay * mom.m[i] + update;
      t.values[i] = static_cast<T>(w - lr * mom.m[i]);
    }
    mom.initialized = true;
  }
  ++state.step;
}

template void novograd_step<float>(BasicModel<float>&, const GradientBag<float>&, OptimState&, const OptimConfig&,
                                   double);
template void novograd_step<double>(BasicModel<double>&, const GradientBag<double>&, OptimState&,
                                    const OptimConfig&, double);

}  // namespace c2f
