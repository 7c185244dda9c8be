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

#include "bartlab/textnorm.hpp"

#include "bartlab/utf8.hpp"

namespace bartlab::textnorm {

bool is_diacritic(char32_t cp) noexcept {
  return (cp >= 0x064B && cp <= 0x065F) || cp == 0x0670;
}

bool is_punctuation(char32_t cp) noexcept {
  if ((cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
      (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E)) {
    return true;
  }
  return cp == 0x060C || cp == 0x061B || cp == 0x061F || cp == 0x00AB || cp == 0x00BB;
}

bool is_sentence_terminator(char32_t cp) noexcept {
  return cp == U'.' || cp == U'!' || cp == U'?' || cp == 0x061F;
}

namespace {

// Appends cp, turning any whitespace into at most one pending space.
class Collapser {
 public:
  void space() { pending_ = !out_.empty(); }
  void put(char32_t cp) {
    if (pending_) out_.push_back(U' ');
    pending_ = false;
    out_.push_back(cp);
  }
  std::u32string take() { return std::move(out_); }

 private:
  std::u32string out_;
  bool pending_ = false;
};

}  // namespace

std::string normalize_eval(std::string_view text, const NormRules& rules) {
  Collapser out;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_space(cp)) {
      out.space();
      continue;
    }
    if (rules.remove_tatweel && cp == kTatweel) continue;
    if (rules.remove_diacritics && is_diacritic(cp)) continue;
    if (rules.normalize_alef && (cp == 0x0622 || cp == 0x0623 || cp == 0x0625)) cp = kAlef;
    if (rules.normalize_yaa && cp == kAlefMaqsura) cp = kYaa;
    if (rules.separate_punct && is_punctuation(cp)) {
      out.space();
      out.put(cp);
      out.space();
      continue;
    }
    out.put(cp);
  }
  return utf8::encode(out.take());
}

std::string normalize_whitespace(std::string_view text) {
  Collapser out;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_space(cp)) {
      out.space();
    } else {
      out.put(cp);
    }
  }
  return utf8::encode(out.take());
}

std::vector<std::string> split_sentences(std::string_view text) {
  const std::u32string s = utf8::decode(normalize_whitespace(text));
  std::vector<std::string> sentences;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_sentence_terminator(s[i])) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < s.size() && is_sentence_terminator(s[end])) ++end;
    if (end == s.size() || s[end] == U' ') {
      sentences.push_back(utf8::encode(s.substr(start, end - start)));
      start = end + 1;  // skip the single separating space
    }
    i = end;
  }
  if (start < s.size()) sentences.push_back(utf8::encode(s.substr(start)));
  return sentences;
}

}  // namespace bartlab::textnorm
