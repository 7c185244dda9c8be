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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bartlab/error.hpp"

namespace bartlab::data {

/// One document/summary pair. `source` tags the dataset it came from.
struct Example {
  std::string id;
  std::string source;
  std::string document;
  std::string summary;
  bool operator==(const Example&) const = default;
};

/// Strict loading throws on the first bad line; lenient loading skips it
/// and records the problem.
enum class LoadMode { kStrict, kLenient };

struct LineIssue {
  std::size_t line = 0;  // 1-based
  Errc code = Errc::kMalformedLine;
  std::string message;
};

/// Reads {"id", "source", "document", "summary"} objects one per line, in
/// file order. Blank lines are skipped. A line is rejected when it is not a
/// JSON object (MalformedLine), lacks a field (MissingField), has a
/// non-string field or an empty document/summary after trimming
/// (MalformedLine), or repeats an id already seen (MalformedLine).
class JsonlReader {
 public:
  JsonlReader(const std::filesystem::path& path, LoadMode mode);

  /// False at end of file.
  bool next(Example& out);

  const std::vector<LineIssue>& issues() const { return issues_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  LoadMode mode_;
  std::size_t line_ = 0;
  std::vector<std::string> seen_ids_;  // sorted
  std::vector<LineIssue> issues_;
};

struct LoadResult {
  std::vector<Example> examples;
  std::vector<LineIssue> issues;
};

LoadResult load_jsonl(const std::filesystem::path& path, LoadMode mode = LoadMode::kStrict);

/// Non-blank lines of a plain-text file, one document per line.
std::vector<std::string> read_text_lines(const std::filesystem::path& path);

/// Parses a single line; throws MalformedLine or MissingField.
Example parse_example(const std::string& line);
std::string to_jsonl_line(const Example& example);
void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples);

struct SplitSpec {
  std::size_t train_n = 0;
  std::size_t valid_n = 0;
  std::size_t test_n = 0;
  std::uint64_t seed = 0;
};

struct Splits {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

/// Samples the three splits uniformly without replacement: a seeded
/// Fisher-Yates shuffle of the indices, cut into consecutive runs. Each
/// split keeps input order. Throws SpecInfeasible when the counts exceed
/// the input size.
Splits make_splits(std::span<const Example> examples, const SplitSpec& spec);

/// Uniform sample of total_n examples without replacement from the pooled
/// union of the datasets, in shuffled order. Throws InsufficientData.
std::vector<Example> make_mix(std::span<const std::vector<Example>> datasets, std::size_t total_n,
                              std::uint64_t seed);

/// Split manifests: one id per line.
void write_manifest(const std::filesystem::path& path, std::span<const Example> split);
std::vector<std::string> read_manifest(const std::filesystem::path& path);

/// Examples whose ids appear in the manifest, in manifest order. Throws
/// MissingField naming the first id that is absent.
std::vector<Example> select_by_ids(std::span<const Example> examples, std::span<const std::string> ids);

}  // namespace bartlab::data
