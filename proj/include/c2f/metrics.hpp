// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "c2f/data.hpp"
#include "c2f/model.hpp"

namespace c2f {

// Levenshtein distance with unit costs, two-row DP.
template <typename Tok>
std::size_t edit_distance(std::span<const Tok> a, std::span<const Tok> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <typename Tok>
std::size_t edit_distance(const std::vector<Tok>& a, const std::vector<Tok>& b) {
  return edit_distance(std::span<const Tok>(a), std::span<const Tok>(b));
}

std::vector<std::string> split_words(std::string_view text);

struct ErrorCount {
  std::size_t edits = 0;
  std::size_t ref_len = 0;
};

ErrorCount word_errors(std::string_view ref, std::string_view hyp);
ErrorCount char_errors(std::string_view ref, std::string_view hyp);

// Per-utterance rates; an empty reference throws c2f::Error.
double wer(std::string_view ref, std::string_view hyp);
double cer(std::string_view ref, std::string_view hyp);

// Corpus-level pooling: sum of edits over sum of reference lengths.
class ScoreAccumulator {
 public:
  void add(std::string_view ref, std::string_view hyp);
  double wer() const;
  double cer() const;
  const ErrorCount& words() const { return words_; }
  const ErrorCount& chars() const { return chars_; }
  std::size_t utterances() const { return n_; }

 private:
  ErrorCount words_;
  ErrorCount chars_;
  std::size_t n_ = 0;
};

struct EvalResult {
  double wer = 0.0;
  double cer = 0.0;
  std::size_t n_utts = 0;
  std::size_t ref_words = 0;
  std::size_t ref_chars = 0;
  std::vector<std::string> hypotheses;

  bool operator==(const EvalResult&) const = default;
};

// Eval-mode forward, greedy decoding, pooled WER/CER. The model's mode is
// restored afterwards.
EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size = 16);

// Greedy transcript of one utterance (eval mode).
std::string transcribe(Model& model, const FeatureSequence& features);

}  // namespace c2f
