// Copyright 2026 The bartlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace bartlab::textnorm {

inline constexpr char32_t kTatweel = 0x0640;
inline constexpr char32_t kAlef = 0x0627;
inline constexpr char32_t kYaa = 0x064A;
inline constexpr char32_t kAlefMaqsura = 0x0649;

/// Evaluation-time normalization switches. All on by default.
struct NormRules {
  bool remove_tatweel = true;
  bool remove_diacritics = true;
  bool normalize_alef = true;   // U+0622, U+0623, U+0625 -> U+0627
  bool normalize_yaa = true;    // U+0649 -> U+064A
  bool separate_punct = true;
};

/// Harakat U+064B..U+065F and the dagger alif U+0670.
bool is_diacritic(char32_t cp) noexcept;

/// ASCII punctuation, Arabic comma/semicolon/question mark and guillemets.
bool is_punctuation(char32_t cp) noexcept;

/// '.', '!', '?' and the Arabic question mark U+061F.
bool is_sentence_terminator(char32_t cp) noexcept;

/// Normalizes text for ROUGE scoring. Idempotent. Whitespace runs collapse
/// to one space and the result is trimmed.
std::string normalize_eval(std::string_view text, const NormRules& rules = {});

/// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Splits at every run of terminators that is followed by whitespace or
/// the end of the text. Terminators stay with the sentence they close.
/// Text without a sentence break comes back as a single element; blank
/// text gives an empty list.
std::vector<std::string> split_sentences(std::string_view text);

}  // namespace bartlab::textnorm
