// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "c2f/frontend.hpp"
#include "c2f/rng.hpp"

namespace c2f {

struct CutoutConfig {
  int n_masks = 5;
  int max_time = 120;  // frames
  int max_freq = 50;   // feature channels

  void validate() const;
};

struct CutoutRect {
  std::size_t t0, t1;  // [t0, t1)
  std::size_t f0, f1;  // [f0, f1)
};

// Mask rectangles drawn for one utterance, clipped to the valid region.
std::vector<CutoutRect> draw_cutout(std::size_t valid_len, std::size_t n_features, const CutoutConfig& cfg,
                                    CounterRng& rng);

// Returns a copy of feats with n_masks rectangles set to zero.
FeatureSequence cutout(const FeatureSequence& feats, const CutoutConfig& cfg, CounterRng& rng);

}  // namespace c2f
