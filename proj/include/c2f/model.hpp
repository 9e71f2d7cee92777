// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "c2f/alphabet.hpp"
#include "c2f/common.hpp"
#include "c2f/rng.hpp"

namespace c2f {

struct SeparableSpec {
  int kernel = 1;
  int channels = 1;
};

struct BlockSpec {
  int repeats = 1;  // S
  int modules = 1;  // R
  int kernel = 1;   // K
  int channels = 1; // c_out
};

// Time-channel separable convolutional acoustic model: C1 (stride 2),
// residual blocks B1..Bn, C2, C3 (pointwise) form the encoder; C4 (pointwise
// projection to labels) is the decoder.
struct ModelConfig {
  std::string preset = "custom";
  int n_features = 64;
  SeparableSpec c1{33, 256};
  std::vector<BlockSpec> blocks;
  SeparableSpec c2{87, 512};
  int c3_channels = 1024;
  int n_labels = 29;  // alphabet size + blank
  double bn_eps = 1e-3;
  double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch

  static ModelConfig quartznet15x5(int n_labels);
  static ModelConfig micro(int n_labels);
  // "quartznet15x5" or "micro".
  static ModelConfig from_preset(std::string_view name, int n_labels);

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Partition { kEncoder, kDecoder };
enum class PartitionSelector { kEncoder, kDecoder, kAll };
enum class TensorRole { kWeight, kBias, kGain, kShift, kRunningMean, kRunningVar };
enum class Mode { kTrain, kEval };

template <typename T>
struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> values;
  Partition partition = Partition::kEncoder;
  TensorRole role = TensorRole::kWeight;
  bool trainable = true;

  // Running statistics are state, not parameters: never optimized.
  bool is_parameter() const { return role != TensorRole::kRunningMean && role != TensorRole::kRunningVar; }
};

template <typename T>
class BasicModel {
 public:
  // All tensors allocated; kernels zero, gains one, running var one.
  BasicModel(ModelConfig cfg, Alphabet alphabet);

  const ModelConfig& config() const { return config_; }
  const Alphabet& alphabet() const { return alphabet_; }
  std::vector<NamedTensor<T>>& tensors() { return tensors_; }
  const std::vector<NamedTensor<T>>& tensors() const { return tensors_; }

  NamedTensor<T>& tensor(std::string_view name);
  const NamedTensor<T>& tensor(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  bool has_tensor(std::string_view name) const;

  std::size_t parameter_count() const;

  Mode mode = Mode::kTrain;
  std::uint64_t step = 0;

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> out(config_, alphabet_);
    out.mode = mode;
    out.step = step;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      auto& dst = out.tensors()[i];
      dst.trainable = tensors_[i].trainable;
      dst.values.assign(tensors_[i].values.begin(), tensors_[i].values.end());
    }
    return out;
  }

 private:
  ModelConfig config_;
  Alphabet alphabet_;
  std::vector<NamedTensor<T>> tensors_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

using Model = BasicModel<float>;
using ModelD = BasicModel<double>;

template <typename T>
using GradientBag = std::map<std::string, std::vector<T>>;

// Intermediate activations recorded by a caching forward pass.
template <typename T>
class ForwardCache {
 public:
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

  bool empty() const;
  void clear();
  // Hash of which ReLU units were active; equal signatures mean the loss is
  // smooth between the two passes' parameters.
  std::uint64_t activation_signature() const;

  struct Impl;
  std::unique_ptr<Impl> impl;
};

struct ForwardOptions {
  // Train mode only; frozen layers never update their statistics.
  bool update_running_stats = true;
};

// Glorot-uniform kernels (fan per layer type), zero biases, unit gains.
Model build_model(const ModelConfig& cfg, const Alphabet& alphabet, const CounterRng& rng);

// Only C1 strides, so the output is ceil(input_len / 2).
std::size_t output_length(std::size_t input_len, const ModelConfig& cfg);

// Glorot bound sqrt(6 / (fan_in + fan_out)) for a kernel tensor of the model.
double glorot_bound(const ModelConfig& cfg, const NamedTensor<float>& tensor);
double glorot_bound(const ModelConfig& cfg, std::string_view name, const std::vector<std::size_t>& shape);

// Input [B][T][n_features] with per-utterance lens; returns logits
// [B][ceil(T/2)][n_labels]. Pass a cache to enable backward.
template <typename T>
SequenceBatch<T> forward(BasicModel<T>& model, const SequenceBatch<T>& input, ForwardCache<T>* cache = nullptr,
                         ForwardOptions opts = {});

// Gradients of every trainable parameter given dLoss/dLogits.
template <typename T>
GradientBag<T> backward(const BasicModel<T>& model, const ForwardCache<T>& cache, const SequenceBatch<T>& dlogits);

template <typename T>
void set_trainable(BasicModel<T>& model, PartitionSelector which, bool flag) {
  for (auto& t : model.tensors()) {
    bool hit = which == PartitionSelector::kAll ||
               (which == PartitionSelector::kEncoder && t.partition == Partition::kEncoder) ||
               (which == PartitionSelector::kDecoder && t.partition == Partition::kDecoder);
    if (hit) t.trainable = flag;
  }
}

// New model whose C4 is freshly initialized for new_alphabet; encoder
// tensors, trainable flags and the step counter are copied unchanged.
Model swap_decoder(const Model& model, const Alphabet& new_alphabet, const CounterRng& rng);

// Hex SHA-256 over names, shapes and raw bytes of the partition's tensors.
std::string partition_digest(const Model& model, Partition partition);

}  // namespace c2f
