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

#include "bartlab/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bartlab/error.hpp"

namespace bartlab {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool allowed(int token, std::size_t position, std::size_t min_length) {
  if (token == special::kPad || token == special::kBos) return false;
  return token != special::kEos || position >= min_length;
}

std::vector<double> single(Scorer& scorer, const std::vector<int>& prefix) {
  auto rows = scorer.next_log_probs({prefix});
  if (rows.size() != 1 || rows[0].size() != scorer.vocab_size()) {
    fail(Errc::kInvalidConfig, "scorer returned a malformed distribution");
  }
  return std::move(rows[0]);
}

struct Candidate {
  double score;
  int token;
  std::size_t beam;
};

}  // namespace

template <typename T>
ModelScorer<T>::ModelScorer(const Parameters<T>& params, const ModelConfig& cfg, std::span<const int> src_ids)
    : params_(params), cfg_(cfg), source_(encode_source(params, cfg, src_ids)) {}

template <typename T>
std::vector<std::vector<double>> ModelScorer<T>::next_log_probs(const std::vector<std::vector<int>>& prefixes) {
  return next_token_log_probs(params_, cfg_, source_, prefixes);
}

std::vector<std::vector<double>> FunctionScorer::next_log_probs(const std::vector<std::vector<int>>& prefixes) {
  std::vector<std::vector<double>> out;
  out.reserve(prefixes.size());
  for (const auto& p : prefixes) out.push_back(fn_(p));
  return out;
}

void BeamConfig::validate() const {
  if (beam_size < 1) fail(Errc::kInvalidConfig, "beam_size must be at least 1");
  if (min_length < 1) fail(Errc::kInvalidConfig, "min_length must be at least 1");
  if (max_length < min_length) fail(Errc::kInvalidConfig, "max_length must be at least min_length");
  if (!(length_penalty >= 0.0)) fail(Errc::kInvalidConfig, "length_penalty must not be negative");
}

double ranking_score(const Hypothesis& h, double length_penalty) {
  if (length_penalty == 0.0) return h.score;
  const auto generated = static_cast<double>(h.tokens.ids.size() - 1);
  return h.score / std::pow(std::max(1.0, generated), length_penalty);
}

Hypothesis greedy(Scorer& scorer, std::size_t max_length) {
  Hypothesis h{{{special::kBos}, SeqKind::kTarget}, 0.0};
  for (std::size_t pos = 1; pos <= max_length; ++pos) {
    const auto lp = single(scorer, h.tokens.ids);
    int best = -1;
    for (std::size_t v = 0; v < lp.size(); ++v) {
      const int tok = static_cast<int>(v);
      if (!allowed(tok, pos, 1)) continue;
      if (best < 0 || lp[v] > lp[static_cast<std::size_t>(best)]) best = tok;
    }
    h.tokens.ids.push_back(best);
    h.score += lp[static_cast<std::size_t>(best)];
    if (best == special::kEos) break;
  }
  return h;
}

Hypothesis beam_search(Scorer& scorer, const BeamConfig& cfg) {
  cfg.validate();
  const std::size_t beam = cfg.beam_size;
  std::vector<Hypothesis> live = {{{{special::kBos}, SeqKind::kTarget}, 0.0}};
  std::vector<Hypothesis> pool;
  std::vector<Candidate> cands;

  for (std::size_t pos = 1; pos <= cfg.max_length && !live.empty(); ++pos) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : live) prefixes.push_back(h.tokens.ids);
    const auto lp = scorer.next_log_probs(prefixes);
    if (lp.size() != live.size()) fail(Errc::kInvalidConfig, "scorer returned the wrong number of rows");

    cands.clear();
    for (std::size_t b = 0; b < live.size(); ++b) {
      if (lp[b].size() != scorer.vocab_size()) fail(Errc::kInvalidConfig, "scorer returned a malformed row");
      for (std::size_t v = 0; v < lp[b].size(); ++v) {
        const int tok = static_cast<int>(v);
        if (allowed(tok, pos, cfg.min_length) && lp[b][v] > kNegInf) {
          cands.push_back({live[b].score + lp[b][v], tok, b});
        }
      }
    }
    const std::size_t keep = std::min(cands.size(), 2 * beam);
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.beam < b.beam;
                      });

    std::vector<Hypothesis> next;
    for (std::size_t rank = 0; rank < keep; ++rank) {
      const Candidate& c = cands[rank];
      Hypothesis h = live[c.beam];
      h.tokens.ids.push_back(c.token);
      h.score = c.score;
      if (c.token == special::kEos) {
        if (rank < beam) pool.push_back(std::move(h));
      } else if (next.size() < beam) {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    if (pool.size() >= beam) {
      if (cfg.length_penalty != 0.0 || live.empty()) break;
      double best_pool = kNegInf;
      for (const auto& h : pool) best_pool = std::max(best_pool, h.score);
      double best_live = kNegInf;
      for (const auto& h : live) best_live = std::max(best_live, h.score);
      if (best_pool >= best_live) break;
    }
  }
  if (pool.size() < beam || cfg.length_penalty == 0.0) {
    for (auto& h : live) pool.push_back(std::move(h));
  }
  if (pool.empty()) fail(Errc::kInvalidConfig, "beam search produced no hypothesis");

  // Earliest-found wins ties, which keeps beam_size 1 identical to greedy.
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (ranking_score(pool[i], cfg.length_penalty) > ranking_score(pool[best], cfg.length_penalty)) best = i;
  }
  return pool[best];
}

template <typename T>
std::vector<Hypothesis> generate(const Parameters<T>& params, const ModelConfig& cfg,
                                 std::span<const TokenSequence> sources, const BeamConfig& beam) {
  BeamConfig capped = beam;
  capped.max_length = std::min(beam.max_length, cfg.max_positions);
  capped.min_length = std::min(beam.min_length, capped.max_length);
  std::vector<Hypothesis> out;
  out.reserve(sources.size());
  for (const auto& src : sources) {
    ModelScorer<T> scorer(params, cfg, src.ids);
    out.push_back(beam_search(scorer, capped));
  }
  return out;
}

template class ModelScorer<float>;
template class ModelScorer<double>;
template std::vector<Hypothesis> generate<float>(const Parameters<float>&, const ModelConfig&,
                                                 std::span<const TokenSequence>, const BeamConfig&);
template std::vector<Hypothesis> generate<double>(const Parameters<double>&, const ModelConfig&,
                                                  std::span<const TokenSequence>, const BeamConfig&);

}  // namespace bartlab
