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

#include "bartlab/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "bartlab/error.hpp"
#include "bartlab/utf8.hpp"

namespace bartlab {

namespace {

constexpr std::array<std::string_view, special::kCount> kSpecialSurfaces = {
    "<pad>", "<unk>", "<s>", "</s>", "<mask>"};

constexpr std::string_view kSpecialsHeader = "#specials pad=0 unk=1 bos=2 eos=3 mask=4";
constexpr std::string_view kCoveragePrefix = "#coverage ";

bool is_special_surface(std::string_view s) {
  return std::find(kSpecialSurfaces.begin(), kSpecialSurfaces.end(), s) != kSpecialSurfaces.end();
}

// Spaces become the boundary marker; each marker opens a new word.
std::vector<std::u32string> split_words(std::string_view text) {
  std::vector<std::u32string> words;
  std::u32string current;
  for (char32_t cp : utf8::decode(text)) {
    if (cp == U' ') {
      if (!current.empty()) words.push_back(std::move(current));
      current.assign(1, kBoundaryCodepoint);
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string escape_piece(const std::string& piece) {
  std::string out;
  for (char c : piece) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_piece(std::string_view s, std::size_t line_no) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (++i == s.size()) fail(Errc::kMalformedLine, "dangling escape on line " + std::to_string(line_no));
    switch (s[i]) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: fail(Errc::kMalformedLine, "unknown escape on line " + std::to_string(line_no));
    }
  }
  return out;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

}  // namespace

std::span<const int> TokenSequence::content() const {
  std::span<const int> view(ids);
  if (kind == SeqKind::kTarget && !view.empty() && view.front() == special::kBos) view = view.subspan(1);
  if (!view.empty() && view.back() == special::kEos) view = view.first(view.size() - 1);
  return view;
}

Vocabulary::Vocabulary(std::vector<std::string> pieces, double coverage)
    : pieces_(std::move(pieces)), coverage_(coverage) {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    piece_to_id_.emplace(pieces_[i], static_cast<int>(i));
    if (i < special::kCount) continue;
    const std::u32string cps = utf8::decode(pieces_[i]);
    if (cps.size() == 1) covered_.insert(cps.front());
  }
}

std::string_view Vocabulary::special_surface(int id) {
  return kSpecialSurfaces.at(static_cast<std::size_t>(id));
}

std::optional<int> Vocabulary::id_of(std::string_view piece) const {
  const auto it = piece_to_id_.find(std::string(piece));
  if (it == piece_to_id_.end()) return std::nullopt;
  return it->second;
}

Vocabulary Vocabulary::train(std::span<const std::string> corpus, std::size_t vocab_size,
                             double char_coverage) {
  if (!(char_coverage > 0.0 && char_coverage <= 1.0)) {
    fail(Errc::kInvalidConfig, "character coverage must lie in (0, 1]");
  }
  std::map<std::u32string, std::uint64_t> word_counts;
  std::map<char32_t, std::uint64_t> char_counts;
  std::uint64_t total_chars = 0;
  for (const std::string& line : corpus) {
    for (std::u32string& word : split_words(line)) {
      for (char32_t cp : word) ++char_counts[cp];
      total_chars += word.size();
      ++word_counts[std::move(word)];
    }
  }
  if (total_chars == 0) fail(Errc::kEmptyCorpus, "corpus has no characters");

  std::vector<std::pair<char32_t, std::uint64_t>> by_freq(char_counts.begin(), char_counts.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> pieces(kSpecialSurfaces.begin(), kSpecialSurfaces.end());
  std::unordered_map<char32_t, int> char_id;
  const long double needed = static_cast<long double>(char_coverage) * total_chars;
  std::uint64_t mass = 0;
  for (const auto& [cp, count] : by_freq) {
    if (static_cast<long double>(mass) >= needed) break;
    mass += count;
    char_id.emplace(cp, static_cast<int>(pieces.size()));
    pieces.push_back(utf8::encode(std::u32string(1, cp)));
  }
  if (pieces.size() > vocab_size) {
    fail(Errc::kVocabTooSmall, "vocab_size " + std::to_string(vocab_size) + " cannot hold " +
                                   std::to_string(special::kCount) + " specials and " +
                                   std::to_string(char_id.size()) + " covered characters");
  }

  // Words as symbol-id sequences; -1 stands for an uncovered character and
  // never takes part in a merge.
  struct Word {
    std::vector<int> symbols;
    std::uint64_t count;
  };
  std::vector<Word> words;
  words.reserve(word_counts.size());
  for (const auto& [text, count] : word_counts) {
    Word w{{}, count};
    for (char32_t cp : text) {
      const auto it = char_id.find(cp);
      w.symbols.push_back(it == char_id.end() ? -1 : it->second);
    }
    if (w.symbols.size() > 1) words.push_back(std::move(w));
  }

  std::unordered_map<std::string, int> known;
  for (std::size_t i = 0; i < pieces.size(); ++i) known.emplace(pieces[i], static_cast<int>(i));

  while (pieces.size() < vocab_size) {
    std::map<std::pair<int, int>, std::uint64_t> pair_counts;
    for (const Word& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        if (w.symbols[i] < 0 || w.symbols[i + 1] < 0) continue;
        pair_counts[{w.symbols[i], w.symbols[i + 1]}] += w.count;
      }
    }
    // Highest count wins; std::map order breaks ties towards lower ids.
    std::pair<int, int> best{-1, -1};
    std::uint64_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count <= best_count) continue;
      if (is_special_surface(pieces[pair.first] + pieces[pair.second])) continue;
      best = pair;
      best_count = count;
    }
    if (best_count == 0) break;

    const std::string merged = pieces[best.first] + pieces[best.second];
    int merged_id;
    if (const auto it = known.find(merged); it != known.end()) {
      merged_id = it->second;
    } else {
      merged_id = static_cast<int>(pieces.size());
      pieces.push_back(merged);
      known.emplace(merged, merged_id);
    }
    for (Word& w : words) {
      std::vector<int> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == best.first && w.symbols[i + 1] == best.second) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(w.symbols[i]);
        }
      }
      w.symbols = std::move(next);
    }
  }
  return Vocabulary(std::move(pieces), char_coverage);
}

void Vocabulary::encode_word(std::u32string_view word, std::vector<int>& out) const {
  std::vector<int> symbols;
  std::vector<std::string> surfaces;
  symbols.reserve(word.size());
  for (char32_t cp : word) {
    std::string s = utf8::encode(std::u32string(1, cp));
    const auto it = covered_.contains(cp) ? piece_to_id_.find(s) : piece_to_id_.end();
    symbols.push_back(it == piece_to_id_.end() ? special::kUnk : it->second);
    surfaces.push_back(std::move(s));
  }
  while (symbols.size() > 1) {
    int best_id = -1;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      if (symbols[i] == special::kUnk || symbols[i + 1] == special::kUnk) continue;
      const auto it = piece_to_id_.find(surfaces[i] + surfaces[i + 1]);
      if (it == piece_to_id_.end() || it->second < special::kCount) continue;
      if (best_id < 0 || it->second < best_id) {
        best_id = it->second;
        best_pos = i;
      }
    }
    if (best_id < 0) break;
    symbols[best_pos] = best_id;
    surfaces[best_pos] += surfaces[best_pos + 1];
    symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    surfaces.erase(surfaces.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

TokenSequence Vocabulary::encode(std::string_view text, SeqKind kind) const {
  TokenSequence seq{{}, kind};
  if (kind == SeqKind::kTarget) seq.ids.push_back(special::kBos);
  for (const std::u32string& word : split_words(text)) encode_word(word, seq.ids);
  seq.ids.push_back(special::kEos);
  return seq;
}

std::string Vocabulary::decode(std::span<const int> ids, bool strip_specials) const {
  std::string joined;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
      fail(Errc::kInvalidId, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                 std::to_string(pieces_.size()));
    }
    if (id < special::kCount) {
      if (!strip_specials) joined += kSpecialSurfaces[static_cast<std::size_t>(id)];
      continue;
    }
    joined += pieces_[static_cast<std::size_t>(id)];
  }
  std::string out;
  out.reserve(joined.size());
  for (std::size_t pos = 0; pos < joined.size();) {
    if (joined.compare(pos, kBoundaryMarker.size(), kBoundaryMarker) == 0) {
      out.push_back(' ');
      pos += kBoundaryMarker.size();
    } else {
      out.push_back(joined[pos++]);
    }
  }
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  out += kSpecialsHeader;
  out += '\n';
  out += kCoveragePrefix;
  out += format_double(coverage_);
  out += '\n';
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    out += escape_piece(pieces_[i]);
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  if (!next_line() || line != kSpecialsHeader) {
    fail(Errc::kMalformedLine, "vocabulary must start with '" + std::string(kSpecialsHeader) + "'");
  }
  if (!next_line() || !line.starts_with(kCoveragePrefix)) {
    fail(Errc::kMalformedLine, "missing '#coverage' header on line 2");
  }
  double coverage = 0.0;
  {
    const char* first = line.data() + kCoveragePrefix.size();
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, coverage);
    if (ec != std::errc() || ptr != last || !(coverage > 0.0 && coverage <= 1.0)) {
      fail(Errc::kMalformedLine, "bad coverage value on line 2");
    }
  }
  std::vector<std::string> pieces;
  while (next_line()) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) fail(Errc::kMalformedLine, "line " + std::to_string(line_no) + " has no tab");
    std::size_t id = 0;
    auto [ptr, ec] = std::from_chars(line.data() + tab + 1, line.data() + line.size(), id);
    if (ec != std::errc() || ptr != line.data() + line.size() || id != pieces.size()) {
      fail(Errc::kMalformedLine, "line " + std::to_string(line_no) + ": ids must be dense and ascending");
    }
    pieces.push_back(unescape_piece(std::string_view(line).substr(0, tab), line_no));
  }
  if (pieces.size() < special::kCount) fail(Errc::kMalformedLine, "vocabulary lacks the special pieces");
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const bool reserved = i < special::kCount;
    if (reserved && pieces[i] != kSpecialSurfaces[i]) {
      fail(Errc::kMalformedLine, "special id " + std::to_string(i) + " must be " + std::string(kSpecialSurfaces[i]));
    }
    if (!reserved && is_special_surface(pieces[i])) {
      fail(Errc::kMalformedLine, "piece " + std::to_string(i) + " shadows a special token");
    }
  }
  std::unordered_set<std::string> seen(pieces.begin(), pieces.end());
  if (seen.size() != pieces.size()) fail(Errc::kMalformedLine, "duplicate pieces in vocabulary");
  return Vocabulary(std::move(pieces), coverage);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kFileNotFound, path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::kIoError, "cannot write " + path.string());
  out << serialize();
  if (!out) fail(Errc::kIoError, "short write to " + path.string());
}

}  // namespace bartlab
