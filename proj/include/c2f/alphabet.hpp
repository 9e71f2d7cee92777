// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace c2f {

enum class AlphabetPreset { kEnglish, kCzech, kCzechSimplified };

struct AlphabetOptions {
  // Place the 28 symbols shared with English first, in English order, so
  // common symbols get identical ids in both inventories.
  bool aligned = false;
};

// Ordered grapheme inventory. Symbol ids are 0..size()-1; the CTC blank is
// the extra index size().
class Alphabet {
 public:
  Alphabet() = default;

  static Alphabet from_preset(AlphabetPreset preset, AlphabetOptions opts = {});
  // Letters are sorted by codepoint; space and apostrophe are appended last
  // (added if absent). Duplicates or multi-codepoint symbols are rejected.
  static Alphabet from_symbols(std::span<const std::string> symbols);
  // Reconstructs an alphabet exactly in the given order (checkpoint header).
  static Alphabet from_ordered(std::span<const std::string> symbols);
  // Accepts "english", "czech", "czech-simplified" (or "czech_simplified").
  static Alphabet from_name(std::string_view name);

  std::size_t size() const { return symbols_.size(); }
  int blank_id() const { return static_cast<int>(symbols_.size()); }
  std::size_t num_labels() const { return symbols_.size() + 1; }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& symbol(int id) const;
  bool contains(char32_t cp) const { return index_.contains(cp); }
  // -1 when absent.
  int id_of(char32_t cp) const;

  bool operator==(const Alphabet& other) const { return symbols_ == other.symbols_; }

 private:
  explicit Alphabet(std::vector<std::string> ordered);

  std::vector<std::string> symbols_;
  std::map<char32_t, int> index_;
};

// The 41 Czech letters (the digraph "ch" is two letters).
const std::vector<std::string>& czech_letters();
const std::vector<std::string>& english_letters();

// NFD decomposition, removal of nonspacing marks, NFC recomposition.
std::string strip_diacritics(std::string_view text);

// Lowercases internally; throws c2f::Error naming the first out-of-alphabet
// character and its byte offset.
std::vector<int> encode_transcript(std::string_view text, const Alphabet& alphabet);
// Throws c2f::Error for any id outside [0, blank_id).
std::string decode_labels(std::span<const int> ids, const Alphabet& alphabet);

// Accented grapheme -> base grapheme over the symbols of an alphabet,
// identity elsewhere.
class SimplificationMap {
 public:
  explicit SimplificationMap(const Alphabet& source);

  std::string apply(std::string_view symbol) const;
  // Simplified symbol strings of the source alphabet, deduplicated.
  std::vector<std::string> image() const;
  const std::map<std::string, std::string>& mapping() const { return mapping_; }

 private:
  std::map<std::string, std::string> mapping_;
};

}  // namespace c2f
