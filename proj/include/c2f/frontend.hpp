// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "c2f/common.hpp"

namespace c2f {

struct Waveform {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Frames x features, plus the number of meaningful leading frames.
struct FeatureSequence {
  Matrix<float> data;
  std::size_t valid_len = 0;
  double frame_shift = 0.010;
  double frame_len = 0.020;

  std::size_t frames() const { return data.rows; }
  std::size_t features() const { return data.cols; }
};

struct FrontendConfig {
  int sample_rate = 16000;
  int n_features = 64;
  double win_ms = 20.0;
  double hop_ms = 10.0;
  double mel_fmin = 0.0;
  double mel_fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;
  bool dct = false;
  bool normalize = true;
  double variance_floor = 1e-8;
  double preemphasis = 0.0;  // 0 disables; 0.97 is the usual value

  int win_samples() const;
  int hop_samples() const;
  int n_fft() const;  // next power of two >= window
  void validate() const;
};

// PCM-16 RIFF/WAVE reader. Stereo is averaged to mono; samples are scaled by
// 1/32768. A set expected_rate rejects files recorded at another rate.
Waveform load_wav(const std::filesystem::path& path, std::optional<int> expected_rate = std::nullopt);
// PCM-16 mono writer; samples are clipped to the representable range.
void save_wav(const std::filesystem::path& path, const Waveform& wav);

std::size_t frame_count(std::size_t n_samples, const FrontendConfig& cfg);

// n_features x (n_fft/2 + 1) triangular HTK-mel filters with unit peaks.
Matrix<double> mel_filterbank(const FrontendConfig& cfg);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

FeatureSequence extract_features(const Waveform& wav, const FrontendConfig& cfg);

}  // namespace c2f
