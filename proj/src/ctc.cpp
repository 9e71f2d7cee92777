// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace c2f {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Blank-interleaved target: b l1 b l2 ... lU b.
std::vector<int> extend(std::span<const int> target, int blank) {
  std::vector<int> ext(2 * target.size() + 1, blank);
  for (std::size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
  return ext;
}

// A label may skip the preceding blank unless it repeats the label before it.
bool can_skip(const std::vector<int>& ext, std::size_t s, int blank) {
  return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
}

void check_instance(const Matrix<double>& logits, std::span<const int> target) {
  if (logits.cols < 2) throw Error("CTC needs at least one symbol plus blank");
  const int blank = static_cast<int>(logits.cols) - 1;
  for (int id : target)
    if (id < 0 || id >= blank) throw Error("target id " + std::to_string(id) + " out of range");
  for (double v : logits.data)
    if (!std::isfinite(v)) throw Error("non-finite logit");
  const std::size_t need = ctc_min_frames(target);
  if (logits.rows < std::max<std::size_t>(need, 1))
    throw Error(std::to_string(logits.rows) + " frames cannot emit a target needing " + std::to_string(need));
}

Matrix<double> forward_log_alpha(const Matrix<double>& lp, const std::vector<int>& ext, int blank) {
  const std::size_t frames = lp.rows, states = ext.size();
  Matrix<double> alpha(frames, states, kNegInf);
  alpha(0, 0) = lp(0, blank);
  if (states > 1) alpha(0, 1) = lp(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(ext, s, blank)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, ext[s]);
    }
  }
  return alpha;
}

Matrix<double> backward_log_beta(const Matrix<double>& lp, const std::vector<int>& ext, int blank) {
  const std::size_t frames = lp.rows, states = ext.size();
  Matrix<double> beta(frames, states, kNegInf);
  beta(frames - 1, states - 1) = lp(frames - 1, ext[states - 1]);
  if (states > 1) beta(frames - 1, states - 2) = lp(frames - 1, ext[states - 2]);
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < states) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < states && can_skip(ext, s + 2, blank)) b = log_add(b, beta(t + 1, s + 2));
      beta(t, s) = b == kNegInf ? kNegInf : b + lp(t, ext[s]);
    }
  }
  return beta;
}

double final_log_likelihood(const Matrix<double>& alpha) {
  const std::size_t last = alpha.rows - 1, states = alpha.cols;
  double ll = alpha(last, states - 1);
  if (states > 1) ll = log_add(ll, alpha(last, states - 2));
  return ll;
}

}  // namespace

Matrix<double> log_softmax(const Matrix<double>& logits) {
  Matrix<double> out(logits.rows, logits.cols);
  for (std::size_t t = 0; t < logits.rows; ++t) {
    const auto row = logits.row(t);
    const double hi = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - hi);
    const double lse = hi + std::log(sum);
    for (std::size_t k = 0; k < logits.cols; ++k) out(t, k) = row[k] - lse;
  }
  return out;
}

std::size_t ctc_min_frames(std::span<const int> target) {
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < target.size(); ++i) repeats += target[i] == target[i - 1] ? 1 : 0;
  return target.size() + repeats;
}

double ctc_neg_log_likelihood(const Matrix<double>& logprobs, std::span<const int> target) {
  check_instance(logprobs, target);
  const int blank = static_cast<int>(logprobs.cols) - 1;
  const auto ext = extend(target, blank);
  return -final_log_likelihood(forward_log_alpha(logprobs, ext, blank));
}

CtcInstanceResult ctc_instance(const Matrix<double>& logits, std::span<const int> target) {
  check_instance(logits, target);
  const int blank = static_cast<int>(logits.cols) - 1;
  const Matrix<double> lp = log_softmax(logits);
  const auto ext = extend(target, blank);
  const Matrix<double> alpha = forward_log_alpha(lp, ext, blank);
  const Matrix<double> beta = backward_log_beta(lp, ext, blank);
  const double ll = final_log_likelihood(alpha);
  if (!std::isfinite(ll)) throw Error("target has zero probability");

  CtcInstanceResult res;
  res.nll = -ll;
  res.occupancy = Matrix<double>(lp.rows, ext.size());
  res.grad = Matrix<double>(lp.rows, lp.cols);
  for (std::size_t t = 0; t < lp.rows; ++t) {
    for (std::size_t k = 0; k < lp.cols; ++k) res.grad(t, k) = std::exp(lp(t, k));
    for (std::size_t s = 0; s < ext.size(); ++s) {
      const double lg = alpha(t, s) + beta(t, s) - lp(t, ext[s]) - ll;
      const double g = lg == kNegInf ? 0.0 : std::exp(lg);
      res.occupancy(t, s) = g;
      res.grad(t, ext[s]) -= g;
    }
  }
  return res;
}

CtcBatchResult ctc_loss(std::span<const Matrix<double>> logits, std::span<const std::vector<int>> targets) {
  if (logits.size() != targets.size()) throw Error("logits and targets differ in batch size");
  if (logits.empty()) throw Error("empty CTC batch");
  CtcBatchResult out;
  const double scale = 1.0 / static_cast<double>(logits.size());
  for (std::size_t b = 0; b < logits.size(); ++b) {
    CtcInstanceResult r;
    try {
      r = ctc_instance(logits[b], targets[b]);
    } catch (const Error& e) {
      throw Error("CTC instance " + std::to_string(b) + ": " + e.what());
    }
    out.loss += r.nll * scale;
    for (double& g : r.grad.data) g *= scale;
    out.grads.push_back(std::move(r.grad));
  }
  return out;
}

template <typename T>
double ctc_loss(const SequenceBatch<T>& logits, std::span<const std::vector<int>> targets, SequenceBatch<T>* grad) {
  std::vector<Matrix<double>> per(logits.batch);
  for (std::size_t b = 0; b < logits.batch; ++b) {
    per[b] = Matrix<double>(logits.lens[b], logits.channels);
    for (std::size_t t = 0; t < logits.lens[b]; ++t)
      for (std::size_t k = 0; k < logits.channels; ++k) per[b](t, k) = logits.frame(b, t)[k];
  }
  CtcBatchResult res = ctc_loss(per, targets);
  if (grad != nullptr) {
    *grad = SequenceBatch<T>(logits.batch, logits.steps, logits.channels);
    grad->lens = logits.lens;
    for (std::size_t b = 0; b < logits.batch; ++b)
      for (std::size_t t = 0; t < logits.lens[b]; ++t)
        for (std::size_t k = 0; k < logits.channels; ++k) grad->frame(b, t)[k] = static_cast<T>(res.grads[b](t, k));
  }
  return res.loss;
}

template <typename T>
std::vector<int> best_path(const Matrix<T>& scores, std::size_t len) {
  std::vector<int> path;
  const std::size_t n = std::min(len, scores.rows);
  path.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto row = scores.row(t);
    // max_element keeps the first maximum, so ties go to the lowest index.
    path.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return path;
}

std::vector<int> collapse_path(std::span<const int> path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int id : path) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

template <typename T>
std::string greedy_decode(const Matrix<T>& scores, std::size_t len, const Alphabet& alphabet) {
  if (scores.cols != alphabet.num_labels()) throw Error("score width does not match the alphabet");
  const auto ids = collapse_path(best_path(scores, len), alphabet.blank_id());
  return decode_labels(ids, alphabet);
}

template double ctc_loss<float>(const SequenceBatch<float>&, std::span<const std::vector<int>>, SequenceBatch<float>*);
template double ctc_loss<double>(const SequenceBatch<double>&, std::span<const std::vector<int>>,
                                 SequenceBatch<double>*);
template std::vector<int> best_path<float>(const Matrix<float>&, std::size_t);
template std::vector<int> best_path<double>(const Matrix<double>&, std::size_t);
template std::string greedy_decode<float>(const Matrix<float>&, std::size_t, const Alphabet&);
template std::string greedy_decode<double>(const Matrix<double>&, std::size_t, const Alphabet&);

}  // namespace c2f
