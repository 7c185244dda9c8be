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
#include <string>
#include <string_view>

#include "bartlab/rng.hpp"
#include "bartlab/tokenizer.hpp"

namespace bartlab {

/// Corruption settings for denoising pretraining.
struct NoiseConfig {
  double mask_ratio = 0.30;
  double poisson_lambda = 3.5;
  bool permute_sentences = true;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const NoiseConfig&) const = default;
};

/// Statistics of one text_infill call, for diagnostics and tests.
struct InfillReport {
  std::size_t budget = 0;
  std::size_t masked = 0;     // content tokens replaced by a mask
  std::size_t spans = 0;      // spans sampled, including zero-length ones
  std::size_t inserted = 0;   // zero-length spans
};

std::uint64_t sample_span_length(double lambda, RandomSource& rng);

/// Replaces Poisson-length spans of content tokens by single mask ids until
/// round(mask_ratio * n) content tokens are masked. The terminal eos (and a
/// leading bos on targets) is never touched.
TokenSequence text_infill(const TokenSequence& tokens, const NoiseConfig& cfg, RandomSource& rng,
                          InfillReport* report = nullptr);

std::string permute_sentences(std::string_view text, RandomSource& rng);

struct PretrainPair {
  TokenSequence source;
  TokenSequence target;
};

/// Noised (source, clean target) pair for one example. Randomness comes
/// only from mix_seed(cfg.seed, example_index).
PretrainPair make_pretrain_pair(std::string_view text, const Vocabulary& vocab, const NoiseConfig& cfg,
                                std::uint64_t example_index);

/// Same, with an explicit random source.
PretrainPair make_pretrain_pair(std::string_view text, const Vocabulary& vocab, const NoiseConfig& cfg,
                                RandomSource& rng);

/// {"src_ids": [...], "tgt_ids": [...], "example_index": n}
std::string pair_to_jsonl(const PretrainPair& pair, std::uint64_t example_index);

}  // namespace bartlab
