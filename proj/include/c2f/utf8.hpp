// Copyright 2026 The c2f Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace c2f::utf8 {

struct CodePoint {
  char32_t value;
  std::size_t byte_offset;
};

// Throws c2f::Error on malformed UTF-8.
std::vector<CodePoint> decode(std::string_view text);
std::u32string to_u32(std::string_view text);
std::string encode(char32_t cp);
std::string encode(std::u32string_view text);

// Unicode-aware lowercasing, NFC/NFD normalization.
std::string to_lower(std::string_view text);
std::string nfc(std::string_view text);
std::string nfd(std::string_view text);

}  // namespace c2f::utf8
