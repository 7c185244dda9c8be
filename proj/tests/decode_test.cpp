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

#include <cmath>
#include <map>
#include <vector>

#include "bartlab/decode.hpp"
#include "bartlab/error.hpp"
#include "doctest.h"
#include "decode_fixtures.hpp"
#include "oracles.hpp"

using namespace bartlab;

using namespace bartlab::fixtures;

TEST_CASE("a model that always predicts eos stops immediately") {
  FunctionScorer scorer(8, [](const std::vector<int>&) { return dist(8, {{special::kEos, 0.97}}); });
  const auto g = greedy(scorer, 10);
  CHECK(g.tokens.ids == std::vector<int>{special::kBos, special::kEos});
  CHECK(g.tokens.kind == SeqKind::kTarget);
  BeamConfig cfg;
  const auto b = beam_search(scorer, cfg);
  CHECK(b.tokens.ids == g.tokens.ids);
  CHECK(b.score == g.score);
}

TEST_CASE("beam 2 solves the greedy-suboptimal fixture") {
  FunctionScorer scorer(8, crafted);
  const auto g = greedy(scorer, 3);
  CHECK(g.tokens.ids == std::vector<int>{special::kBos, kA, kA, special::kEos});
  CHECK(std::exp(g.score) == doctest::Approx(0.6 * 0.35).epsilon(1e-6));

  BeamConfig cfg;
  cfg.beam_size = 2;
  cfg.max_length = 3;
  const auto b = beam_search(scorer, cfg);
  CHECK(b.tokens.ids == std::vector<int>{special::kBos, kB, kC, special::kEos});
  CHECK(std::exp(b.score) == doctest::Approx(0.4 * 0.9).epsilon(1e-6));

  const auto best = exhaustive(crafted, 8, 3);
  CHECK(best.ids == b.tokens.ids);
  CHECK(best.score == doctest::Approx(b.score).epsilon(1e-12));
  // Six emittable ids, five of them non-eos: 1 + 5 + 5 * 5 * 6 sequences.
  CHECK(best.count == 156);
}

TEST_CASE("beam 1 equals greedy on random tiny models") {
  auto cfg = oracle::tiny_config();
  SplitMix64 rng(101);
  for (std::uint64_t m = 0; m < 100; ++m) {
    const auto params = peaked_params(cfg, 1000 + m);
    const auto src = random_source(cfg.vocab_size, rng);
    ModelScorer<double> scorer(params, cfg, src.ids);
    const auto g = greedy(scorer, 12);
    BeamConfig bc;
    bc.beam_size = 1;
    bc.max_length = 12;
    const auto b = beam_search(scorer, bc);
    REQUIRE(b.tokens.ids == g.tokens.ids);
    CHECK(b.score == g.score);
    CHECK(greedy(scorer, 12).tokens == g.tokens);
  }
}

TEST_CASE("returned scores match independent rescoring") {
  auto cfg = oracle::tiny_config();
  SplitMix64 rng(102);
  for (std::uint64_t m = 0; m < 40; ++m) {
    const auto params = peaked_params(cfg, 2000 + m);
    const auto src = random_source(cfg.vocab_size, rng);
    ModelScorer<double> scorer(params, cfg, src.ids);
    for (std::size_t beam : {1u, 2u, 3u, 5u}) {
      BeamConfig bc;
      bc.beam_size = beam;
      bc.max_length = 10;
      const auto h = beam_search(scorer, bc);
      CHECK(std::abs(h.score - rescore(params, cfg, src, h.tokens.ids)) < 1e-6);

      // Output shape and monotone partial scores.
      REQUIRE(h.tokens.ids.front() == special::kBos);
      CHECK((h.tokens.ids.back() == special::kEos || h.tokens.ids.size() == bc.max_length + 1));
      for (std::size_t i = 1; i < h.tokens.ids.size(); ++i) {
        CHECK(h.tokens.ids[i] != special::kPad);
        CHECK(h.tokens.ids[i] != special::kBos);
      }
      double prev = 0.0;
      for (std::size_t len = 2; len <= h.tokens.ids.size(); ++len) {
        const std::vector<int> part(h.tokens.ids.begin(), h.tokens.ids.begin() + static_cast<std::ptrdiff_t>(len));
        const double s = rescore(params, cfg, src, part);
        CHECK(s <= prev + 1e-12);
        prev = s;
      }
    }
  }
}

TEST_CASE("a wide enough beam is exactly optimal") {
  // 5 emittable ids (unk, eos, mask, 5, 6) and length 3: at most 125
  // sequences, so a beam of 125 never prunes.
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto fn = random_model(7, seed);
    FunctionScorer scorer(7, fn);
    BeamConfig bc;
    bc.beam_size = 125;
    bc.max_length = 3;
    const auto h = beam_search(scorer, bc);
    const auto best = exhaustive(fn, 7, 3);
    CHECK(h.tokens.ids == best.ids);
    CHECK(h.score == doctest::Approx(best.score).epsilon(1e-12));

    bc.min_length = 2;
    const auto hm = beam_search(scorer, bc);
    const auto bestm = exhaustive(fn, 7, 3, 2);
    CHECK(hm.tokens.ids == bestm.ids);
    CHECK(hm.tokens.ids.size() >= 3);
  }
}

TEST_CASE("beam search never does worse than greedy with a wide beam on small problems") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto fn = random_model(8, 500 + seed);
    FunctionScorer scorer(8, fn);
    const auto g = greedy(scorer, 4);
    BeamConfig bc;
    bc.beam_size = 6 * 6 * 6 * 6;
    bc.max_length = 4;
    const auto b = beam_search(scorer, bc);
    CHECK(b.score >= g.score - 1e-12);
    CHECK(b.score == doctest::Approx(exhaustive(fn, 8, 4).score).epsilon(1e-12));
  }
}

TEST_CASE("min_length suppresses early eos") {
  FunctionScorer scorer(8, [](const std::vector<int>&) { return dist(8, {{special::kEos, 0.9}, {kA, 0.05}}); });
  BeamConfig bc;
  bc.min_length = 4;
  bc.max_length = 6;
  const auto h = beam_search(scorer, bc);
  CHECK(h.tokens.ids == std::vector<int>{special::kBos, kA, kA, kA, special::kEos});
}

TEST_CASE("length penalty favours longer hypotheses") {
  // Short: eos at once (p = 0.5). Long: A A A eos with p = 0.45 * 0.9^2 * 0.95.
  // Intermediate eos is unlikely enough to rank outside the beam.
  auto fn = [](const std::vector<int>& prefix) {
    if (prefix.size() == 1) return dist(8, {{special::kEos, 0.5}, {kA, 0.45}});
    if (prefix.size() < 4) return dist(8, {{kA, 0.9}, {kB, 0.09}, {special::kEos, 0.01}});
    return dist(8, {{special::kEos, 0.95}});
  };
  FunctionScorer scorer(8, fn);
  BeamConfig bc;
  bc.beam_size = 2;
  bc.max_length = 5;
  CHECK(beam_search(scorer, bc).tokens.ids == std::vector<int>{special::kBos, special::kEos});
  bc.length_penalty = 1.0;
  const auto h = beam_search(scorer, bc);
  CHECK(h.tokens.ids == std::vector<int>{special::kBos, kA, kA, kA, special::kEos});
  CHECK(ranking_score(h, 1.0) == doctest::Approx(h.score / 4.0));
}

TEST_CASE("batched generation equals one-at-a-time generation") {
  auto cfg = oracle::tiny_config();
  const auto params = peaked_params(cfg, 77);
  SplitMix64 rng(103);
  std::vector<TokenSequence> sources;
  for (int i = 0; i < 12; ++i) sources.push_back(random_source(cfg.vocab_size, rng));
  BeamConfig bc;
  bc.max_length = 10;
  const auto all = generate(params, cfg, sources, bc);
  REQUIRE(all.size() == sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto one = generate(params, cfg, std::span(&sources[i], 1), bc);
    CHECK(one[0].tokens == all[i].tokens);
    CHECK(one[0].score == all[i].score);
  }
}

TEST_CASE("BeamConfig validation") {
  FunctionScorer scorer(8, crafted);
  BeamConfig bc;
  bc.beam_size = 0;
  CHECK_THROWS_AS(beam_search(scorer, bc), Error);
  bc = BeamConfig{};
  bc.min_length = 5;
  bc.max_length = 4;
  CHECK_THROWS_AS(beam_search(scorer, bc), Error);
  bc = BeamConfig{};
  bc.min_length = 0;
  CHECK_THROWS_AS(beam_search(scorer, bc), Error);
}
