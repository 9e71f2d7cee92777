// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#include "c2f/alphabet.hpp"

#include <unicode/uchar.h>

#include <algorithm>
#include <cstdio>
#include <set>

#include "c2f/common.hpp"
#include "c2f/utf8.hpp"

namespace c2f {

namespace {

constexpr char32_t kSpace = U' ';
constexpr char32_t kApostrophe = U'\'';

// The single scalar of an NFC-normalized symbol, or throws.
char32_t symbol_scalar(const std::string& symbol) {
  const std::string normalized = utf8::nfc(symbol);
  const auto cps = utf8::decode(normalized);
  if (cps.size() != 1) throw Error("alphabet symbol '" + symbol + "' is not a single code point after NFC");
  return cps.front().value;
}

std::string describe(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
  return "'" + utf8::encode(cp) + "' (" + buf + ")";
}

}  // namespace

const std::vector<std::string>& english_letters() {
  static const std::vector<std::string> letters = [] {
    std::vector<std::string> v;
    for (char c = 'a'; c <= 'z'; ++c) v.emplace_back(1, c);
    return v;
  }();
  return letters;
}

const std::vector<std::string>& czech_letters() {
  static const std::vector<std::string> letters = [] {
    std::vector<std::string> v = english_letters();
    for (const char* s : {"á", "č", "ď", "é", "ě", "í", "ň", "ó", "ř", "š", "ť", "ú", "ů", "ý", "ž"}) v.emplace_back(s);
    return v;
  }();
  return letters;
}

Alphabet::Alphabet(std::vector<std::string> ordered) : symbols_(std::move(ordered)) {
  bool space = false;
  bool apostrophe = false;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const char32_t cp = symbol_scalar(symbols_[i]);
    symbols_[i] = utf8::encode(cp);
    if (!index_.emplace(cp, static_cast<int>(i)).second) throw Error("duplicate alphabet symbol " + describe(cp));
    space |= cp == kSpace;
    apostrophe |= cp == kApostrophe;
  }
  if (!space || !apostrophe) throw Error("alphabet must contain space and apostrophe");
}

Alphabet Alphabet::from_symbols(std::span<const std::string> symbols) {
  if (symbols.empty()) throw Error("custom alphabet is empty");
  std::vector<char32_t> letters;
  std::set<char32_t> seen;
  for (const auto& s : symbols) {
    const char32_t cp = symbol_scalar(s);
    if (!seen.insert(cp).second) throw Error("duplicate alphabet symbol " + describe(cp));
    if (cp != kSpace && cp != kApostrophe) letters.push_back(cp);
  }
  std::sort(letters.begin(), letters.end());
  std::vector<std::string> ordered;
  for (char32_t cp : letters) ordered.push_back(utf8::encode(cp));
  ordered.emplace_back(" ");
  ordered.emplace_back("'");
  return Alphabet(std::move(ordered));
}

Alphabet Alphabet::from_ordered(std::span<const std::string> symbols) {
  return Alphabet(std::vector<std::string>(symbols.begin(), symbols.end()));
}

Alphabet Alphabet::from_preset(AlphabetPreset preset, AlphabetOptions opts) {
  switch (preset) {
    case AlphabetPreset::kEnglish:
    case AlphabetPreset::kCzechSimplified:
      return from_symbols(english_letters());
    case AlphabetPreset::kCzech:
      if (opts.aligned) {
        std::vector<std::string> ordered = english_letters();
        ordered.emplace_back(" ");
        ordered.emplace_back("'");
        const auto& cz = czech_letters();
        ordered.insert(ordered.end(), cz.begin() + 26, cz.end());
        return Alphabet(std::move(ordered));
      }
      return from_symbols(czech_letters());
  }
  throw Error("unknown alphabet preset");
}

Alphabet Alphabet::from_name(std::string_view name) {
  if (name == "english") return from_preset(AlphabetPreset::kEnglish);
  if (name == "czech") return from_preset(AlphabetPreset::kCzech);
  if (name == "czech-simplified" || name == "czech_simplified") return from_preset(AlphabetPreset::kCzechSimplified);
  throw Error("unknown alphabet '" + std::string(name) + "' (expected english, czech or czech-simplified)");
}

const std::string& Alphabet::symbol(int id) const {
  if (id < 0 || id >= blank_id()) throw Error("label id " + std::to_string(id) + " is not a symbol");
  return symbols_[static_cast<std::size_t>(id)];
}

int Alphabet::id_of(char32_t cp) const {
  auto it = index_.find(cp);
  return it == index_.end() ? -1 : it->second;
}

std::string strip_diacritics(std::string_view text) {
  std::u32string kept;
  for (const auto& cp : utf8::decode(utf8::nfd(text))) {
    if (u_charType(static_cast<UChar32>(cp.value)) == U_NON_SPACING_MARK) continue;
    kept.push_back(cp.value);
  }
  return utf8::nfc(utf8::encode(kept));
}

std::vector<int> encode_transcript(std::string_view text, const Alphabet& alphabet) {
  const std::string lowered = utf8::to_lower(utf8::nfc(text));
  std::vector<int> ids;
  for (const auto& cp : utf8::decode(lowered)) {
    const int id = alphabet.id_of(cp.value);
    if (id < 0)
      throw Error("character " + describe(cp.value) + " at byte " + std::to_string(cp.byte_offset) +
                  " is not in the alphabet");
    ids.push_back(id);
  }
  return ids;
}

std::string decode_labels(std::span<const int> ids, const Alphabet& alphabet) {
  std::string out;
  for (int id : ids) out += alphabet.symbol(id);
  return out;
}

SimplificationMap::SimplificationMap(const Alphabet& source) {
  for (const auto& s : source.symbols()) mapping_.emplace(s, strip_diacritics(s));
}

std::string SimplificationMap::apply(std::string_view symbol) const {
  auto it = mapping_.find(std::string(symbol));
  return it == mapping_.end() ? std::string(symbol) : it->second;
}

std::vector<std::string> SimplificationMap::image() const {
  std::set<std::string> img;
  for (const auto& [from, to] : mapping_) img.insert(to);
  return {img.begin(), img.end()};
}

}  // namespace c2f
