// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace c2f {

// Raised for every contract violation the library detects (bad input files,
// shape mismatches, out-of-alphabet text, numerical blow-ups).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

}  // namespace c2f

namespace c2f {

// Padded batch of sequences laid out [batch][steps][channels]. Entries at
// steps >= lens[b] are zero.
template <typename T>
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t channels = 0;
  std::vector<std::size_t> lens;
  std::vector<T> data;

  SequenceBatch() = default;
  SequenceBatch(std::size_t b, std::size_t t, std::size_t c)
      : batch(b), steps(t), channels(c), lens(b, t), data(b * t * c, T{}) {}

  T* frame(std::size_t b, std::size_t t) { return data.data() + (b * steps + t) * channels; }
  const T* frame(std::size_t b, std::size_t t) const { return data.data() + (b * steps + t) * channels; }

  // Copies the valid frames of utterance b out as a matrix.
  Matrix<T> utterance(std::size_t b) const {
    Matrix<T> m(lens[b], channels);
    for (std::size_t t = 0; t < lens[b]; ++t)
      for (std::size_t c = 0; c < channels; ++c) m(t, c) = frame(b, t)[c];
    return m;
  }
};

}  // namespace c2f
