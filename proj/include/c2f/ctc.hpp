// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "c2f/alphabet.hpp"
#include "c2f/common.hpp"

namespace c2f {

// Row-wise log-softmax.
Matrix<double> log_softmax(const Matrix<double>& logits);

// Minimum number of frames that can emit the target: its length plus one
// blank for every pair of equal adjacent labels.
std::size_t ctc_min_frames(std::span<const int> target);

// -log p(target | logprobs) by the log-space forward recursion. The blank is
// the last column of logprobs.
double ctc_neg_log_likelihood(const Matrix<double>& logprobs, std::span<const int> target);

struct CtcInstanceResult {
  double nll = 0.0;
  // d nll / d logits = softmax(logits) - gamma (unscaled by batch size).
  Matrix<double> grad;
  // gamma over the blank-interleaved target, frames x (2U + 1).
  Matrix<double> occupancy;
};

CtcInstanceResult ctc_instance(const Matrix<double>& logits, std::span<const int> target);

struct CtcBatchResult {
  double loss = 0.0;  // mean negative log-likelihood over instances
  std::vector<Matrix<double>> grads;  // already divided by batch size
};

// Throws c2f::Error naming the offending instance for too-short inputs or
// non-finite logits.
CtcBatchResult ctc_loss(std::span<const Matrix<double>> logits, std::span<const std::vector<int>> targets);

// Batched training adapter: loss and dLoss/dLogits laid out like `logits`.
template <typename T>
double ctc_loss(const SequenceBatch<T>& logits, std::span<const std::vector<int>> targets, SequenceBatch<T>* grad);

// Argmax per frame (ties to the lowest index) over the first len frames.
template <typename T>
std::vector<int> best_path(const Matrix<T>& scores, std::size_t len);

// Merge repeats, then drop blanks.
std::vector<int> collapse_path(std::span<const int> path, int blank);

template <typename T>
std::string greedy_decode(const Matrix<T>& scores, std::size_t len, const Alphabet& alphabet);

}  // namespace c2f
