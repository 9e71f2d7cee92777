// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/metrics.hpp"

#include <sstream>

#include "c2f/ctc.hpp"
#include "c2f/utf8.hpp"

namespace c2f {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream ss{std::string(text)};
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

ErrorCount word_errors(std::string_view ref, std::string_view hyp) {
  const auto r = split_words(ref);
  const auto h = split_words(hyp);
  return {edit_distance(r, h), r.size()};
}

ErrorCount char_errors(std::string_view ref, std::string_view hyp) {
  const auto r = utf8::to_u32(ref);
  const auto h = utf8::to_u32(hyp);
  return {edit_distance(std::span<const char32_t>(r), std::span<const char32_t>(h)), r.size()};
}

double wer(std::string_view ref, std::string_view hyp) {
  const auto e = word_errors(ref, hyp);
  if (e.ref_len == 0) throw Error("empty reference");
  return static_cast<double>(e.edits) / static_cast<double>(e.ref_len);
}

double cer(std::string_view ref, std::string_view hyp) {
  const auto e = char_errors(ref, hyp);
  if (e.ref_len == 0) throw Error("empty reference");
  return static_cast<double>(e.edits) / static_cast<double>(e.ref_len);
}

void ScoreAccumulator::add(std::string_view ref, std::string_view hyp) {
  const auto w = word_errors(ref, hyp);
  const auto c = char_errors(ref, hyp);
  if (w.ref_len == 0) throw Error("empty reference");
  words_.edits += w.edits;
  words_.ref_len += w.ref_len;
  chars_.edits += c.edits;
  chars_.ref_len += c.ref_len;
  ++n_;
}

double ScoreAccumulator::wer() const {
  if (words_.ref_len == 0) throw Error("no references scored");
  return static_cast<double>(words_.edits) / static_cast<double>(words_.ref_len);
}

double ScoreAccumulator::cer() const {
  if (chars_.ref_len == 0) throw Error("no references scored");
  return static_cast<double>(chars_.edits) / static_cast<double>(chars_.ref_len);
}

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
  if (!(model.alphabet() == data.alphabet())) throw Error("model and dataset use different alphabets");
  const Mode saved = model.mode;
  model.mode = Mode::kEval;
  ScoreAccumulator acc;
  EvalResult res;
  res.hypotheses.resize(data.size());
  try {
    BatchingOptions opts;
    opts.batch_size = batch_size;
    opts.training = false;
    for (const auto& batch : make_batches(data, opts)) {
      const SequenceBatch<float> logits = forward(model, batch.features);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const std::size_t idx = batch.indices[b];
        std::string hyp = greedy_decode(logits.utterance(b), logits.lens[b], model.alphabet());
        acc.add(data.utterance(idx).text, hyp);
        res.hypotheses[idx] = std::move(hyp);
      }
    }
  } catch (...) {
    model.mode = saved;
    throw;
  }
  model.mode = saved;
  res.wer = acc.wer();
  res.cer = acc.cer();
  res.n_utts = acc.utterances();
  res.ref_words = acc.words().ref_len;
  res.ref_chars = acc.chars().ref_len;
  return res;
}

std::string transcribe(Model& model, const FeatureSequence& features) {
  SequenceBatch<float> x(1, features.valid_len, features.features());
  for (std::size_t t = 0; t < features.valid_len; ++t)
    for (std::size_t f = 0; f < features.features(); ++f) x.frame(0, t)[f] = features.data(t, f);
  const Mode saved = model.mode;
  model.mode = Mode::kEval;
  SequenceBatch<float> logits;
  try {
    logits = forward(model, x);
  } catch (...) {
    model.mode = saved;
    throw;
  }
  model.mode = saved;
  return greedy_decode(logits.utterance(0), logits.lens[0], model.alphabet());
}

}  // namespace c2f
