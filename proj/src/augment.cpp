// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/augment.hpp"

#include <algorithm>

namespace c2f {

void CutoutConfig::validate() const {
  if (n_masks <= 0 || max_time <= 0 || max_freq <= 0) throw Error("cutout parameters must be positive");
}

std::vector<CutoutRect> draw_cutout(std::size_t valid_len, std::size_t n_features, const CutoutConfig& cfg,
                                    CounterRng& rng) {
  cfg.validate();
  std::vector<CutoutRect> rects;
  if (valid_len == 0 || n_features == 0) return rects;
  const auto max_w = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_time), valid_len);
  const auto max_h = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_freq), n_features);
  for (int i = 0; i < cfg.n_masks; ++i) {
    const auto w = rng.uniform_int(1, max_w);
    const auto h = rng.uniform_int(1, max_h);
    const auto t0 = rng.uniform_int(0, valid_len - 1);
    const auto f0 = rng.uniform_int(0, n_features - 1);
    rects.push_back({t0, std::min<std::size_t>(t0 + w, valid_len), f0, std::min<std::size_t>(f0 + h, n_features)});
  }
  return rects;
}

FeatureSequence cutout(const FeatureSequence& feats, const CutoutConfig& cfg, CounterRng& rng) {
  FeatureSequence out = feats;
  for (const auto& r : draw_cutout(feats.valid_len, feats.features(), cfg, rng))
    for (std::size_t t = r.t0; t < r.t1; ++t)
      for (std::size_t f = r.f0; f < r.f1; ++f) out.data(t, f) = 0.0f;
  return out;
}

}  // namespace c2f
