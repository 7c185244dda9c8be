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

#include "bartlab/data.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "json.hpp"

#include "bartlab/rng.hpp"
#include "bartlab/utf8.hpp"

namespace bartlab::data {
namespace {

bool blank(const std::string& s) {
  const auto cps = utf8::decode(s);
  return std::all_of(cps.begin(), cps.end(), [](char32_t c) { return utf8::is_space(c); });
}

std::string string_field(const nlohmann::json& obj, const char* name) {
  const auto it = obj.find(name);
  if (it == obj.end()) fail(Errc::kMissingField, name);
  if (!it->is_string()) fail(Errc::kMalformedLine, std::string("field ") + name + " is not a string");
  return it->get<std::string>();
}

}  // namespace

Example parse_example(const std::string& line) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::kMalformedLine, e.what());
  }
  if (!obj.is_object()) fail(Errc::kMalformedLine, "not a JSON object");
  Example ex;
  ex.id = string_field(obj, "id");
  ex.source = string_field(obj, "source");
  ex.document = string_field(obj, "document");
  ex.summary = string_field(obj, "summary");
  if (blank(ex.document)) fail(Errc::kMalformedLine, "empty document");
  if (blank(ex.summary)) fail(Errc::kMalformedLine, "empty summary");
  return ex;
}

std::string to_jsonl_line(const Example& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["source"] = ex.source;
  j["document"] = ex.document;
  j["summary"] = ex.summary;
  return j.dump();
}

JsonlReader::JsonlReader(const std::filesystem::path& path, LoadMode mode)
    : path_(path), in_(path, std::ios::binary), mode_(mode) {
  if (!in_) fail(Errc::kFileNotFound, path.string());
}

bool JsonlReader::next(Example& out) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    try {
      Example ex = parse_example(line);
      const auto pos = std::lower_bound(seen_ids_.begin(), seen_ids_.end(), ex.id);
      if (pos != seen_ids_.end() && *pos == ex.id) fail(Errc::kMalformedLine, "duplicate id " + ex.id);
      seen_ids_.insert(pos, ex.id);
      out = std::move(ex);
      return true;
    } catch (const Error& e) {
      // Drop the "Code: " prefix; the code travels separately.
      std::string what = e.what();
      what = what.substr(what.find(": ") + 2);
      if (e.code() == Errc::kMissingField) what = "missing field " + what;
      if (mode_ == LoadMode::kStrict) fail(e.code(), path_.string() + ":" + std::to_string(line_) + ": " + what);
      issues_.push_back({line_, e.code(), what});
    }
  }
  return false;
}

LoadResult load_jsonl(const std::filesystem::path& path, LoadMode mode) {
  JsonlReader reader(path, mode);
  LoadResult result;
  Example ex;
  while (reader.next(ex)) result.examples.push_back(std::move(ex));
  result.issues = reader.issues();
  return result;
}

std::vector<std::string> read_text_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kFileNotFound, path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!blank(line)) out.push_back(line);
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::kIoError, "cannot write " + path.string());
  for (const auto& ex : examples) out << to_jsonl_line(ex) << '\n';
  if (!out) fail(Errc::kIoError, "write failed: " + path.string());
}

Splits make_splits(std::span<const Example> examples, const SplitSpec& spec) {
  const std::size_t need = spec.train_n + spec.valid_n + spec.test_n;
  if (need > examples.size()) {
    fail(Errc::kSpecInfeasible, "splits need " + std::to_string(need) + " examples, have " +
                                    std::to_string(examples.size()));
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(spec.seed);
  rng.shuffle(order);

  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    std::sort(idx.begin(), idx.end());
    std::vector<Example> out;
    out.reserve(count);
    for (auto i : idx) out.push_back(examples[i]);
    return out;
  };
  Splits s;
  s.train = take(0, spec.train_n);
  s.valid = take(spec.train_n, spec.valid_n);
  s.test = take(spec.train_n + spec.valid_n, spec.test_n);
  return s;
}

std::vector<Example> make_mix(std::span<const std::vector<Example>> datasets, std::size_t total_n,
                              std::uint64_t seed) {
  std::vector<const Example*> pool;
  for (const auto& d : datasets) {
    for (const auto& ex : d) pool.push_back(&ex);
  }
  if (total_n > pool.size()) {
    fail(Errc::kInsufficientData, "mixture needs " + std::to_string(total_n) + " examples, union has " +
                                      std::to_string(pool.size()));
  }
  SplitMix64 rng(seed);
  rng.shuffle(pool);
  std::vector<Example> out;
  out.reserve(total_n);
  for (std::size_t i = 0; i < total_n; ++i) out.push_back(*pool[i]);
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const Example> split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::kIoError, "cannot write " + path.string());
  for (const auto& ex : split) out << ex.id << '\n';
}

std::vector<std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kFileNotFound, path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<Example> select_by_ids(std::span<const Example> examples, std::span<const std::string> ids) {
  std::unordered_map<std::string_view, const Example*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.id, &ex);
  std::vector<Example> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) fail(Errc::kMissingField, "id " + id + " not in dataset");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace bartlab::data
