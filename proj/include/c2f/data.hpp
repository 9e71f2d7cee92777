// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "c2f/alphabet.hpp"
#include "c2f/augment.hpp"
#include "c2f/frontend.hpp"

namespace c2f {

// One manifest line: {"audio_filepath": ..., "duration": ..., "text": ...}.
struct Utterance {
  std::filesystem::path audio_path;  // resolved against the manifest directory
  double duration = 0.0;
  std::string text;
};

// JSON lines; text lowercased, order preserved. Errors name the line number.
std::vector<Utterance> read_manifest(const std::filesystem::path& path);
// Paths are written relative to the manifest directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<Utterance>& utts);

// Lowercase, collapse runs of spaces, trim. Throws c2f::Error listing every
// residual out-of-alphabet character.
std::string clean_transcript(std::string_view text, const Alphabet& alphabet);

// Copies the manifest with text replaced by strip_diacritics(text); every
// other field and the key order are preserved.
void simplify_manifest(const std::filesystem::path& in, const std::filesystem::path& out);

// Utterances with cached features and encoded targets.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& manifest, const Alphabet& alphabet,
                      const FrontendConfig& frontend);

  std::size_t size() const { return utts_.size(); }
  const Utterance& utterance(std::size_t i) const { return utts_[i]; }
  const FeatureSequence& features(std::size_t i) const { return feats_[i]; }
  const std::vector<int>& targets(std::size_t i) const { return targets_[i]; }
  const Alphabet& alphabet() const { return alphabet_; }

 private:
  std::vector<Utterance> utts_;
  std::vector<FeatureSequence> feats_;
  std::vector<std::vector<int>> targets_;
  Alphabet alphabet_;
};

struct Batch {
  SequenceBatch<float> features;  // B x Tmax x F, zero padded
  std::vector<std::vector<int>> targets;
  std::vector<std::size_t> indices;  // dataset positions

  std::size_t size() const { return indices.size(); }
  std::vector<std::size_t> target_lens() const;
};

struct BatchingOptions {
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  // Training shuffles by (seed, epoch) and applies cutout; evaluation keeps
  // manifest order and never augments.
  bool training = false;
  CutoutConfig cutout;
  bool augment = true;
};

// Every utterance exactly once; the final short batch is kept.
std::vector<Batch> make_batches(const Dataset& data, const BatchingOptions& opts);
// Fisher-Yates permutation from the (seed, "shuffle", epoch) stream.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

// Synthetic micro-speech language: every symbol is a sine burst.
struct SynthConfig {
  std::string base_symbols = "acdenrst";  // UTF-8, one letter per base symbol
  std::string accented_symbols = "áčďé";  // variant i simplifies to base i
  double tone_base_hz = 400.0;
  double tone_step_hz = 200.0;
  double accent_shift_hz = 25.0;
  double accent_duration_factor = 1.5;
  double symbol_dur_ms = 60.0;
  double gap_ms = 20.0;
  double word_gap_ms = 100.0;  // silence rendering a space
  int min_symbols = 3;
  int max_symbols = 12;
  double word_break_prob = 0.25;
  double amplitude = 0.5;
  double noise_std = 0.3;
  int sample_rate = 16000;

  std::vector<std::string> base() const;
  std::vector<std::string> accented() const;
  // Every symbol a transcript may contain (bases, then variants).
  std::vector<std::string> symbols() const;
  void validate() const;
};

// Tone frequency and duration of one synthetic symbol.
struct ToneSpec {
  double freq_hz;
  double dur_ms;
};
ToneSpec tone_for(const SynthConfig& cfg, std::string_view symbol);

// Renders a transcript (symbols and single spaces) without noise when
// rng is null.
Waveform synth_utterance(const SynthConfig& cfg, std::string_view text, CounterRng* rng);
std::string synth_transcript(const SynthConfig& cfg, CounterRng& rng);

// Writes out_dir/wav/<name>_NNNNN.wav and out_dir/<name>.jsonl; returns the
// manifest path.
std::filesystem::path synth_corpus(const SynthConfig& cfg, std::size_t n_utts, std::uint64_t seed,
                                   const std::filesystem::path& out_dir, std::string_view name = "train");

}  // namespace c2f
