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

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bartlab/model.hpp"
#include "bartlab/tokenizer.hpp"

namespace bartlab {

/// Next-token log-probabilities for a batch of equal-length prefixes, all
/// conditioned on one fixed source.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<std::vector<double>> next_log_probs(const std::vector<std::vector<int>>& prefixes) = 0;
};

/// Runs the encoder once and the decoder over the full prefix at every step.
template <typename T>
class ModelScorer final : public Scorer {
 public:
  ModelScorer(const Parameters<T>& params, const ModelConfig& cfg, std::span<const int> src_ids);
  std::size_t vocab_size() const override { return cfg_.vocab_size; }
  std::vector<std::vector<double>> next_log_probs(const std::vector<std::vector<int>>& prefixes) override;

 private:
  const Parameters<T>& params_;
  ModelConfig cfg_;
  EncodedSource<T> source_;
};

/// Wraps a callable, for tests and crafted distributions.
class FunctionScorer final : public Scorer {
 public:
  using Fn = std::function<std::vector<double>(const std::vector<int>& prefix)>;
  FunctionScorer(std::size_t vocab, Fn fn) : vocab_(vocab), fn_(std::move(fn)) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<std::vector<double>> next_log_probs(const std::vector<std::vector<int>>& prefixes) override;

 private:
  std::size_t vocab_;
  Fn fn_;
};

struct BeamConfig {
  std::size_t beam_size = 3;
  std::size_t max_length = 128;    // generated tokens, eos included
  double length_penalty = 0.0;     // score / length^penalty; 0 = raw sum
  std::size_t min_length = 1;      // eos allowed from this generated position on

  void validate() const;
};

/// bos-initial target sequence and its summed token log-probability.
struct Hypothesis {
  TokenSequence tokens;
  double score = 0.0;
};

/// Appends the arg-max token (lowest id on ties, never pad or bos) until eos
/// or max_length generated tokens.
Hypothesis greedy(Scorer& scorer, std::size_t max_length);

/// Beam search over cumulative log-probabilities.
///
/// Each step ranks all extensions of the live beams (ties: lower token id,
/// then earlier beam) and keeps the top 2 * beam_size. An eos candidate
/// ranked within the first beam_size is retired to the finished pool; the
/// first beam_size non-eos candidates form the next live set. Search stops
/// once the pool holds beam_size hypotheses and, without a length penalty,
/// no live beam scores above the pool's best (extensions only lower a
/// score). Live beams still open at max_length join the pool truncated.
/// Returns the pool's best by score / length^length_penalty.
Hypothesis beam_search(Scorer& scorer, const BeamConfig& cfg);

/// Normalized score used to rank finished hypotheses.
double ranking_score(const Hypothesis& h, double length_penalty);

/// Decodes each source independently with beam search. max_length is capped
/// at cfg.max_positions, the longest prefix the decoder can attend over.
template <typename T>
std::vector<Hypothesis> generate(const Parameters<T>& params, const ModelConfig& cfg,
                                 std::span<const TokenSequence> sources, const BeamConfig& beam);

}  // namespace bartlab
