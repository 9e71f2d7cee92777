// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "c2f/utf8.hpp"
#include "json.hpp"

namespace c2f {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool blank_line(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string where(const fs::path& path, std::size_t line_no) { return path.string() + ":" + std::to_string(line_no); }

}  // namespace

std::vector<Utterance> read_manifest(const fs::path& path) {
  const auto lines = read_lines(path);
  const fs::path base = path.parent_path();
  std::vector<Utterance> utts;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank_line(lines[i])) continue;
    json obj;
    try {
      obj = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw Error(where(path, i + 1) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw Error(where(path, i + 1) + ": expected a JSON object");
    for (const char* key : {"audio_filepath", "duration", "text"})
      if (!obj.contains(key)) throw Error(where(path, i + 1) + ": missing key \"" + key + "\"");
    if (!obj["audio_filepath"].is_string() || !obj["duration"].is_number() || !obj["text"].is_string())
      throw Error(where(path, i + 1) + ": wrong value type");
    Utterance u;
    fs::path audio = obj["audio_filepath"].get<std::string>();
    u.audio_path = audio.is_absolute() ? audio : base / audio;
    u.duration = obj["duration"].get<double>();
    u.text = utf8::to_lower(obj["text"].get<std::string>());
    if (!(u.duration > 0)) throw Error(where(path, i + 1) + ": duration must be positive");
    utts.push_back(std::move(u));
  }
  return utts;
}

void write_manifest(const fs::path& path, const std::vector<Utterance>& utts) {
  const fs::path base = path.parent_path();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& u : utts) {
    fs::path audio = u.audio_path;
    if (!base.empty()) {
      const fs::path rel = audio.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") audio = rel;
    }
    ordered_json obj;
    obj["audio_filepath"] = audio.generic_string();
    obj["duration"] = u.duration;
    obj["text"] = u.text;
    out << obj.dump() << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

std::string clean_transcript(std::string_view text, const Alphabet& alphabet) {
  const std::string lowered = utf8::to_lower(utf8::nfc(text));
  std::u32string collapsed;
  for (const auto& cp : utf8::decode(lowered)) {
    const bool space = cp.value == U' ' || cp.value == U'\t' || cp.value == U'\n' || cp.value == U'\r';
    if (space) {
      if (!collapsed.empty() && collapsed.back() != U' ') collapsed.push_back(U' ');
    } else {
      collapsed.push_back(cp.value);
    }
  }
  while (!collapsed.empty() && collapsed.back() == U' ') collapsed.pop_back();

  std::vector<char32_t> bad;
  for (char32_t c : collapsed)
    if (!alphabet.contains(c) && std::find(bad.begin(), bad.end(), c) == bad.end()) bad.push_back(c);
  if (!bad.empty()) {
    std::string list;
    for (char32_t c : bad) list += (list.empty() ? "'" : ", '") + utf8::encode(c) + "'";
    throw Error("characters outside the alphabet: " + list);
  }
  return utf8::encode(collapsed);
}

void simplify_manifest(const fs::path& in, const fs::path& out) {
  const auto lines = read_lines(in);
  std::ostringstream buf;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank_line(lines[i])) continue;
    ordered_json obj;
    try {
      obj = ordered_json::parse(lines[i]);
    } catch (const ordered_json::parse_error& e) {
      throw Error(where(in, i + 1) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string())
      throw Error(where(in, i + 1) + ": missing key \"text\"");
    for (const char* key : {"audio_filepath", "duration"})
      if (!obj.contains(key)) throw Error(where(in, i + 1) + ": missing key \"" + key + "\"");
    obj["text"] = strip_diacritics(obj["text"].get<std::string>());
    buf << obj.dump() << '\n';
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error("cannot write manifest " + out.string());
  f << buf.str();
}

// ---------------------------------------------------------------------------

Dataset Dataset::load(const fs::path& manifest, const Alphabet& alphabet, const FrontendConfig& frontend) {
  Dataset ds;
  ds.alphabet_ = alphabet;
  ds.utts_ = read_manifest(manifest);
  for (std::size_t i = 0; i < ds.utts_.size(); ++i) {
    auto& u = ds.utts_[i];
    try {
      u.text = clean_transcript(u.text, alphabet);
      if (u.text.empty()) throw Error("empty transcript");
      ds.feats_.push_back(extract_features(load_wav(u.audio_path, frontend.sample_rate), frontend));
      ds.targets_.push_back(encode_transcript(u.text, alphabet));
    } catch (const Error& e) {
      throw Error("utterance " + std::to_string(i) + " (" + u.audio_path.string() + "): " + e.what());
    }
  }
  return ds;
}

std::vector<std::size_t> Batch::target_lens() const {
  std::vector<std::size_t> out;
  for (const auto& t : targets) out.push_back(t.size());
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(seed, "shuffle", epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
  return order;
}

std::vector<Batch> make_batches(const Dataset& data, const BatchingOptions& opts) {
  if (data.size() == 0) throw Error("cannot batch an empty dataset");
  if (opts.batch_size == 0) throw Error("batch size must be positive");
  std::vector<std::size_t> order;
  if (opts.training) {
    order = shuffled_order(data.size(), opts.seed, opts.epoch);
  } else {
    order.resize(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t end = std::min(order.size(), start + opts.batch_size);
    Batch batch;
    std::size_t tmax = 0;
    for (std::size_t i = start; i < end; ++i) tmax = std::max(tmax, data.features(order[i]).valid_len);
    const std::size_t nf = data.features(order[start]).features();
    batch.features = SequenceBatch<float>(end - start, tmax, nf);
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t idx = order[i];
      const std::size_t b = i - start;
      const FeatureSequence* src = &data.features(idx);
      FeatureSequence masked;
      if (opts.training && opts.augment) {
        CounterRng rng(opts.seed, "cutout", opts.epoch * data.size() + idx);
        masked = cutout(*src, opts.cutout, rng);
        src = &masked;
      }
      if (src->features() != nf) throw Error("utterance " + std::to_string(idx) + " has a different feature size");
      batch.features.lens[b] = src->valid_len;
      for (std::size_t t = 0; t < src->valid_len; ++t)
        std::copy_n(&src->data(t, 0), nf, batch.features.frame(b, t));
      batch.targets.push_back(data.targets(idx));
      batch.indices.push_back(idx);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

std::vector<std::string> split_symbols(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& cp : utf8::decode(s)) out.push_back(utf8::encode(cp.value));
  return out;
}

std::size_t ms_to_samples(double ms, int rate) {
  return static_cast<std::size_t>(std::llround(ms * rate / 1000.0));
}

}  // namespace

std::vector<std::string> SynthConfig::base() const { return split_symbols(base_symbols); }
std::vector<std::string> SynthConfig::accented() const { return split_symbols(accented_symbols); }

std::vector<std::string> SynthConfig::symbols() const {
  auto all = base();
  for (auto& a : accented()) all.push_back(a);
  return all;
}

void SynthConfig::validate() const {
  const auto b = base();
  const auto a = accented();
  if (b.empty()) throw Error("synthetic language needs base symbols");
  if (a.size() > b.size()) throw Error("more accented variants than base symbols");
  const auto all = symbols();
  if (std::set<std::string>(all.begin(), all.end()).size() != all.size()) throw Error("duplicate synthetic symbol");
  for (const auto& s : all)
    if (s == " " || s == "'") throw Error("space and apostrophe are not synthetic symbols");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (strip_diacritics(a[i]) != b[i]) throw Error("variant '" + a[i] + "' does not simplify to '" + b[i] + "'");
  if (tone_base_hz <= 0 || tone_step_hz <= 0 || symbol_dur_ms <= 0 || gap_ms <= 0 || word_gap_ms <= 0 ||
      accent_duration_factor <= 0 || sample_rate <= 0 || noise_std < 0 || amplitude <= 0)
    throw Error("synthetic corpus parameters must be positive");
  if (min_symbols < 1 || max_symbols < min_symbols) throw Error("invalid utterance length range");
  const double top = tone_base_hz + tone_step_hz * static_cast<double>(b.size() - 1) + accent_shift_hz;
  if (top >= sample_rate / 2.0) throw Error("tones exceed the Nyquist frequency");
}

ToneSpec tone_for(const SynthConfig& cfg, std::string_view symbol) {
  const auto b = cfg.base();
  const auto a = cfg.accented();
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i] == symbol) return {cfg.tone_base_hz + static_cast<double>(i) * cfg.tone_step_hz, cfg.symbol_dur_ms};
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] == symbol)
      return {cfg.tone_base_hz + static_cast<double>(i) * cfg.tone_step_hz + cfg.accent_shift_hz,
              cfg.symbol_dur_ms * cfg.accent_duration_factor};
  throw Error("'" + std::string(symbol) + "' is not a synthetic symbol");
}

std::string synth_transcript(const SynthConfig& cfg, CounterRng& rng) {
  const auto all = cfg.symbols();
  const auto n = rng.uniform_int(static_cast<std::uint64_t>(cfg.min_symbols), static_cast<std::uint64_t>(cfg.max_symbols));
  std::string text;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (i > 0 && rng.uniform() < cfg.word_break_prob) text += ' ';
    text += all[rng.uniform_int(0, all.size() - 1)];
  }
  return text;
}

Waveform synth_utterance(const SynthConfig& cfg, std::string_view text, CounterRng* rng) {
  cfg.validate();
  Waveform wav;
  wav.sample_rate = cfg.sample_rate;
  bool first = true;
  bool word_break = false;
  for (const auto& cp : utf8::decode(text)) {
    if (cp.value == U' ') {
      if (first || word_break) throw Error("synthetic transcripts separate words by single spaces");
      word_break = true;
      continue;
    }
    const ToneSpec tone = tone_for(cfg, utf8::encode(cp.value));
    if (!first) wav.samples.resize(wav.samples.size() + ms_to_samples(word_break ? cfg.word_gap_ms : cfg.gap_ms, cfg.sample_rate), 0.0f);
    const std::size_t n = ms_to_samples(tone.dur_ms, cfg.sample_rate);
    for (std::size_t i = 0; i < n; ++i)
      wav.samples.push_back(static_cast<float>(
          cfg.amplitude * std::sin(2.0 * std::numbers::pi * tone.freq_hz * static_cast<double>(i) / cfg.sample_rate)));
    first = false;
    word_break = false;
  }
  if (first || word_break) throw Error("synthetic transcript is empty or ends with a space");
  if (rng != nullptr && cfg.noise_std > 0)
    for (float& s : wav.samples) s = static_cast<float>(s + cfg.noise_std * rng->normal());
  return wav;
}

fs::path synth_corpus(const SynthConfig& cfg, std::size_t n_utts, std::uint64_t seed, const fs::path& out_dir,
                      std::string_view name) {
  cfg.validate();
  fs::create_directories(out_dir / "wav");
  std::vector<Utterance> utts;
  for (std::size_t i = 0; i < n_utts; ++i) {
    CounterRng text_rng(seed, "synth-text", i);
    CounterRng noise_rng(seed, "synth-noise", i);
    Utterance u;
    u.text = synth_transcript(cfg, text_rng);
    const Waveform wav = synth_utterance(cfg, u.text, &noise_rng);
    char file[64];
    std::snprintf(file, sizeof file, "_%05zu.wav", i);
    u.audio_path = out_dir / "wav" / (std::string(name) + file);
    save_wav(u.audio_path, wav);
    u.duration = wav.duration();
    utts.push_back(std::move(u));
  }
  const fs::path manifest = out_dir / (std::string(name) + ".jsonl");
  write_manifest(manifest, utts);
  return manifest;
}

}  // namespace c2f
