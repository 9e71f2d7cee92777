// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "c2f/model.hpp"

namespace c2f {

enum class LrSchedule { kConstant, kCosine };

struct OptimConfig {
  double lr_train = 0.01;
  double lr_finetune = 0.001;
  double beta1 = 0.95;
  double beta2 = 0.5;
  double weight_decay = 0.001;
  double eps = 1e-8;
  std::uint64_t warmup_steps = 1000;
  LrSchedule schedule = LrSchedule::kConstant;
  std::uint64_t total_steps = 0;  // cosine horizon
  double min_lr = 0.0;

  void validate() const;
};

// Linear warmup to base_lr, then constant (or cosine-annealed to min_lr
// over total_steps). Steps count from 1.
double lr_at_step(const OptimConfig& cfg, std::uint64_t step, double base_lr);

// Layer-wise moments: one scalar second moment per tensor.
struct TensorMoments {
  bool initialized = false;
  double v = 0.0;
  std::vector<double> m;

  bool operator==(const TensorMoments&) const = default;
};

struct OptimState {
  std::uint64_t step = 0;
  std::map<std::string, TensorMoments> moments;

  bool operator==(const OptimState&) const = default;
};

// NovoGrad with decoupled weight decay:
//   v <- |g|^2 (first) or beta2 v + (1 - beta2) |g|^2
//   m <- g / (sqrt(v) + eps) + wd w   (first) or beta1 m + (...)
//   w <- w - lr m
// grads must hold exactly the trainable parameters; frozen tensors are
// neither read nor written. Non-finite gradients throw c2f::Error.
template <typename T>
void novograd_step(BasicModel<T>& model, const GradientBag<T>& grads, OptimState& state, const OptimConfig& cfg,
                   double lr);

}  // namespace c2f
