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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace bartlab {

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kMask = 4;
inline constexpr int kCount = 5;
}  // namespace special

/// U+2581, marks a piece that starts after a space.
inline constexpr std::string_view kBoundaryMarker = "\xE2\x96\x81";
inline constexpr char32_t kBoundaryCodepoint = 0x2581;

enum class SeqKind { kSource, kTarget };

/// Encoded text. Sources end with eos; targets are wrapped in bos ... eos.
struct TokenSequence {
  std::vector<int> ids;
  SeqKind kind = SeqKind::kSource;

  /// ids without the bos/eos framing.
  std::span<const int> content() const;

  bool operator==(const TokenSequence&) const = default;
};

/// Subword vocabulary trained by pair merging over characters.
///
/// Ids 0..4 are the specials (pad, unk, bos, eos, mask). They are followed
/// by the covered characters in decreasing frequency and then by merged
/// pieces in the order they were learned. Encoding repeatedly merges the
/// adjacent pair whose concatenation is the lowest-id piece, so the piece
/// list alone is enough to reproduce segmentation after a reload.
class Vocabulary {
 public:
  static Vocabulary train(std::span<const std::string> corpus, std::size_t vocab_size,
                          double char_coverage);

  static Vocabulary parse(std::string_view text);
  static Vocabulary load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  TokenSequence encode(std::string_view text, SeqKind kind) const;

  /// Throws InvalidId for ids outside [0, size()).
  std::string decode(std::span<const int> ids, bool strip_specials = true) const;

  std::size_t size() const noexcept { return pieces_.size(); }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  std::optional<int> id_of(std::string_view piece) const;
  double char_coverage() const noexcept { return coverage_; }
  bool covers(char32_t cp) const { return covered_.contains(cp); }

  static std::string_view special_surface(int id);

  bool operator==(const Vocabulary& other) const {
    return pieces_ == other.pieces_ && coverage_ == other.coverage_;
  }

 private:
  Vocabulary(std::vector<std::string> pieces, double coverage);

  void encode_word(std::u32string_view word, std::vector<int>& out) const;

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> piece_to_id_;
  std::unordered_set<char32_t> covered_;
  double coverage_ = 1.0;
};

}  // namespace bartlab
