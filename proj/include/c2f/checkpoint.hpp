// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "c2f/model.hpp"
#include "c2f/optim.hpp"

namespace c2f {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On-disk layout (all integers little-endian):
//   "C2FCKPT\0" | u32 version | u64 header_len | header (canonical JSON)
//   | u32 n_tensors | n x { u32 name_len, name, u8 trainable, u32 ndim,
//     u64 dims..., f32 values... }
//   | u8 has_optimizer [ | u64 step | u32 n | n x { u32 name_len, name,
//     u8 initialized, f64 v, u64 len, f64 m... } ]
//   | "END\0"
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig config;
  Alphabet alphabet;
  std::uint64_t step = 0;
  std::string stage;
  Model model;
  std::optional<OptimState> optimizer;

  explicit Checkpoint(Model m)
      : config(m.config()), alphabet(m.alphabet()), step(m.step), model(std::move(m)) {}
};

void save_checkpoint(const Model& model, const OptimState* optimizer, const std::string& stage,
                     const std::filesystem::path& path);
// Rejects version mismatches, truncation and tensor names the configuration
// does not define; no partially loaded model escapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Header fields as canonical JSON text (used by `inspect`).
std::string checkpoint_header_json(const Checkpoint& ckpt);

enum class TransferPolicy { kAll, kEncoderOnly };

TransferPolicy transfer_policy_from_name(std::string_view name);
std::string to_string(TransferPolicy policy);

// kAll copies every tensor and requires identical alphabets; kEncoderOnly
// copies encoder tensors bit-exactly and Glorot-initializes a decoder sized
// for new_alphabet. Shape mismatches throw c2f::Error naming the tensor.
Model transfer_init(const ModelConfig& cfg, const Checkpoint& ckpt, TransferPolicy policy,
                    const Alphabet& new_alphabet, const CounterRng& rng);

}  // namespace c2f
