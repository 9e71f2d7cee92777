// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace c2f {

// Counter-based generator. A stream is identified by (seed, purpose, index);
// the n-th draw of a stream is splitmix64(key + n * golden), so streams are
// independent of draw order elsewhere and reproducible across platforms.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

  // Child stream; does not advance this stream.
  CounterRng split(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform in [lo, hi) as double.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in the closed range [lo, hi], unbiased (rejection sampling).
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  // Standard normal via Box-Muller; consumes two draws per call.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace c2f
