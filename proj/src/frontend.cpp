// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <numbers>

namespace c2f {

namespace {

std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

}  // namespace

int FrontendConfig::win_samples() const { return static_cast<int>(std::lround(win_ms * sample_rate / 1000.0)); }
int FrontendConfig::hop_samples() const { return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0)); }
int FrontendConfig::n_fft() const { return static_cast<int>(std::bit_ceil(static_cast<unsigned>(win_samples()))); }

void FrontendConfig::validate() const {
  if (sample_rate <= 0) throw Error("sample_rate must be positive");
  if (n_features <= 0) throw Error("n_features must be positive");
  if (win_samples() <= 0 || hop_samples() <= 0) throw Error("window and hop must be positive");
  if (hop_ms > win_ms) throw Error("hop must not exceed the window");
  if (n_features > n_fft() / 2 + 1) throw Error("n_features exceeds the number of FFT bins");
  const double fmax = mel_fmax > 0 ? mel_fmax : sample_rate / 2.0;
  if (mel_fmin < 0 || fmax <= mel_fmin || fmax > sample_rate / 2.0) throw Error("invalid mel frequency range");
  if (!(log_floor > 0)) throw Error("log_floor must be positive");
}

Waveform load_wav(const std::filesystem::path& path, std::optional<int> expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) { return Error(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16) throw fail("short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      std::uint16_t format = read_u16(f);
      if (format == 0xFFFE && len >= 26) format = read_u16(f + 24);  // extensible: sub-format GUID
      if (format != 1) throw fail("not PCM (format " + std::to_string(format) + ")");
      channels = read_u16(f + 2);
      rate = static_cast<int>(read_u32(f + 4));
      bits = read_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  if (bits != 16) throw fail("only 16-bit PCM is supported");
  if (channels != 1 && channels != 2) throw fail("only mono or stereo is supported");
  if (rate <= 0) throw fail("invalid sample rate");
  if (expected_rate && rate != *expected_rate)
    throw fail("sample rate " + std::to_string(rate) + " Hz, expected " + std::to_string(*expected_rate) + " Hz");

  const std::size_t frame_bytes = 2u * static_cast<std::size_t>(channels);
  const std::size_t n = data_len / frame_bytes;
  Waveform wav;
  wav.sample_rate = rate;
  wav.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c)
      acc += static_cast<std::int16_t>(read_u16(data + i * frame_bytes + 2u * static_cast<std::size_t>(c)));
    wav.samples[i] = static_cast<float>(acc / channels / 32768.0);
  }
  if (wav.samples.empty()) throw fail("no samples");
  return wav;
}

void save_wav(const std::filesystem::path& path, const Waveform& wav) {
  const auto n = static_cast<std::uint32_t>(wav.samples.size());
  std::string out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wav.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wav.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (float s : wav.samples) {
    const double scaled = std::nearbyint(static_cast<double>(s) * 32768.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed for " + path.string());
}

std::size_t frame_count(std::size_t n_samples, const FrontendConfig& cfg) {
  const auto win = static_cast<std::size_t>(cfg.win_samples());
  const auto hop = static_cast<std::size_t>(cfg.hop_samples());
  if (n_samples < win) return 0;
  return (n_samples - win) / hop + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix<double> mel_filterbank(const FrontendConfig& cfg) {
  const int n_bins = cfg.n_fft() / 2 + 1;
  const int n_mels = cfg.n_features;
  const double fmax = cfg.mel_fmax > 0 ? cfg.mel_fmax : cfg.sample_rate / 2.0;
  const double mel_lo = hz_to_mel(cfg.mel_fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));

  Matrix<double> bank(static_cast<std::size_t>(n_mels), static_cast<std::size_t>(n_bins));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft();
      const double rise = (f - lo) / (center - lo);
      const double fall = (hi - f) / (hi - center);
      bank(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return bank;
}

FeatureSequence extract_features(const Waveform& wav, const FrontendConfig& cfg) {
  cfg.validate();
  const int win = cfg.win_samples();
  const int hop = cfg.hop_samples();
  const int n_fft = cfg.n_fft();
  const int n_bins = n_fft / 2 + 1;
  const std::size_t frames = frame_count(wav.samples.size(), cfg);
  if (frames == 0)
    throw Error("utterance of " + std::to_string(wav.samples.size()) + " samples is shorter than one window (" +
                std::to_string(win) + ")");

  std::vector<double> signal(wav.samples.begin(), wav.samples.end());
  if (cfg.preemphasis > 0.0)
    for (std::size_t i = signal.size() - 1; i > 0; --i) signal[i] -= cfg.preemphasis * signal[i - 1];

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int n = 0; n < win; ++n) window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);

  const Matrix<double> bank = mel_filterbank(cfg);
  const auto n_mels = bank.rows;

  double* in = fftw_alloc_real(static_cast<std::size_t>(n_fft));
  fftw_complex* spec = fftw_alloc_complex(static_cast<std::size_t>(n_bins));
  std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(fftw_plan_dft_r2c_1d(n_fft, in, spec, FFTW_ESTIMATE));

  Matrix<double> logmel(frames, n_mels);
  std::vector<double> mag(static_cast<std::size_t>(n_bins));
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = signal.data() + t * static_cast<std::size_t>(hop);
    for (int n = 0; n < n_fft; ++n) in[n] = n < win ? x[n] * window[n] : 0.0;
    fftw_execute(plan.get());
    for (int k = 0; k < n_bins; ++k) mag[k] = std::hypot(spec[k][0], spec[k][1]);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      const auto w = bank.row(m);
      for (int k = 0; k < n_bins; ++k) e += w[k] * mag[k];
      logmel(t, m) = std::log(e + cfg.log_floor);
    }
  }
  plan.reset();
  fftw_free(spec);
  fftw_free(in);

  Matrix<double> feats = logmel;
  if (cfg.dct) {
    // Orthonormal DCT-II over the log-mel energies.
    const auto n = static_cast<double>(n_mels);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t q = 0; q < n_mels; ++q) {
        double acc = 0.0;
        for (std::size_t m = 0; m < n_mels; ++m)
          acc += logmel(t, m) * std::cos(std::numbers::pi * static_cast<double>(q) * (m + 0.5) / n);
        feats(t, q) = acc * std::sqrt((q == 0 ? 1.0 : 2.0) / n);
      }
    }
  }

  if (cfg.normalize) {
    for (std::size_t c = 0; c < n_mels; ++c) {
      double mean = 0.0;
      for (std::size_t t = 0; t < frames; ++t) mean += feats(t, c);
      mean /= static_cast<double>(frames);
      double var = 0.0;
      for (std::size_t t = 0; t < frames; ++t) var += (feats(t, c) - mean) * (feats(t, c) - mean);
      var /= static_cast<double>(frames);
      // Zero-variance channels (silence) normalize to zero.
      const double inv = var >= cfg.variance_floor ? 1.0 / std::sqrt(var) : 0.0;
      for (std::size_t t = 0; t < frames; ++t) feats(t, c) = (feats(t, c) - mean) * inv;
    }
  }

  FeatureSequence out;
  out.data = Matrix<float>(frames, n_mels);
  for (std::size_t i = 0; i < feats.data.size(); ++i) out.data.data[i] = static_cast<float>(feats.data[i]);
  out.valid_len = frames;
  out.frame_shift = cfg.hop_ms / 1000.0;
  out.frame_len = cfg.win_ms / 1000.0;
  return out;
}

}  // namespace c2f
