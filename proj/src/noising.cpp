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

#include "bartlab/noising.hpp"

#include <cmath>

#include "json.hpp"

#include "bartlab/error.hpp"
#include "bartlab/textnorm.hpp"

namespace bartlab {

void NoiseConfig::validate() const {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) fail(Errc::kInvalidConfig, "mask_ratio must lie in [0, 1)");
  if (!(poisson_lambda > 0.0 && std::isfinite(poisson_lambda))) {
    fail(Errc::kInvalidConfig, "poisson_lambda must be positive");
  }
}

std::uint64_t sample_span_length(double lambda, RandomSource& rng) { return rng.poisson(lambda); }

TokenSequence text_infill(const TokenSequence& tokens, const NoiseConfig& cfg, RandomSource& rng,
                          InfillReport* report) {
  cfg.validate();
  const std::span<const int> content = tokens.content();
  const std::size_t n = content.size();
  const auto budget = static_cast<std::size_t>(std::llround(cfg.mask_ratio * static_cast<double>(n)));
  InfillReport stats;
  stats.budget = budget;
  if (budget == 0) {
    if (report) *report = stats;
    return tokens;
  }

  constexpr std::size_t kUnmasked = SIZE_MAX;
  std::vector<std::size_t> span_of(n, kUnmasked);
  std::vector<std::size_t> inserts_before(n, 0);
  std::vector<std::size_t> starts;
  while (stats.masked < budget) {
    auto length = static_cast<std::size_t>(sample_span_length(cfg.poisson_lambda, rng));
    const std::size_t span_id = stats.spans++;
    if (length == 0) {
      starts.clear();
      for (std::size_t p = 0; p < n; ++p) {
        if (span_of[p] == kUnmasked) starts.push_back(p);
      }
      ++inserts_before[starts[rng.below(starts.size())]];
      ++stats.inserted;
      continue;
    }
    std::size_t longest = 0;
    for (std::size_t p = 0, run = 0; p < n; ++p) {
      run = span_of[p] == kUnmasked ? run + 1 : 0;
      longest = std::max(longest, run);
    }
    length = std::min(length, longest);
    // Start positions whose span stays inside unmasked content.
    starts.clear();
    for (std::size_t p = 0, run = 0; p < n; ++p) {
      run = span_of[p] == kUnmasked ? run + 1 : 0;
      if (run >= length) starts.push_back(p + 1 - length);
    }
    const std::size_t start = starts[rng.below(starts.size())];
    for (std::size_t p = start; p < start + length; ++p) span_of[p] = span_id;
    stats.masked += length;
  }

  TokenSequence out{{}, tokens.kind};
  out.ids.reserve(tokens.ids.size());
  if (tokens.kind == SeqKind::kTarget && !tokens.ids.empty() && tokens.ids.front() == special::kBos) {
    out.ids.push_back(special::kBos);
  }
  for (std::size_t p = 0; p < n; ++p) {
    out.ids.insert(out.ids.end(), inserts_before[p], special::kMask);
    if (span_of[p] == kUnmasked) {
      out.ids.push_back(content[p]);
    } else if (p == 0 || span_of[p - 1] != span_of[p]) {
      out.ids.push_back(special::kMask);
    }
  }
  if (!tokens.ids.empty() && tokens.ids.back() == special::kEos) out.ids.push_back(special::kEos);
  if (report) *report = stats;
  return out;
}

std::string permute_sentences(std::string_view text, RandomSource& rng) {
  std::vector<std::string> sentences = textnorm::split_sentences(text);
  if (sentences.size() <= 1) return std::string(text);
  rng.shuffle(sentences);
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out.push_back(' ');
    out += sentences[i];
  }
  return out;
}

PretrainPair make_pretrain_pair(std::string_view text, const Vocabulary& vocab, const NoiseConfig& cfg,
                                RandomSource& rng) {
  cfg.validate();
  PretrainPair pair;
  pair.target = vocab.encode(text, SeqKind::kTarget);
  const std::string shuffled = cfg.permute_sentences ? permute_sentences(text, rng) : std::string(text);
  pair.source = text_infill(vocab.encode(shuffled, SeqKind::kSource), cfg, rng);
  return pair;
}

PretrainPair make_pretrain_pair(std::string_view text, const Vocabulary& vocab, const NoiseConfig& cfg,
                                std::uint64_t example_index) {
  SplitMix64 rng(mix_seed(cfg.seed, example_index));
  return make_pretrain_pair(text, vocab, cfg, rng);
}

std::string pair_to_jsonl(const PretrainPair& pair, std::uint64_t example_index) {
  nlohmann::ordered_json j;
  j["src_ids"] = pair.source.ids;
  j["tgt_ids"] = pair.target.ids;
  j["example_index"] = example_index;
  return j.dump();
}

}  // namespace bartlab
