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

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "bartlab/error.hpp"
#include "bartlab/noising.hpp"
#include "bartlab/rng.hpp"
#include "bartlab/textnorm.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bartlab;

namespace {

TokenSequence source_of(std::size_t n, int first_id = 100) {
  TokenSequence seq{{}, SeqKind::kSource};
  for (std::size_t i = 0; i < n; ++i) seq.ids.push_back(first_id + static_cast<int>(i));
  seq.ids.push_back(special::kEos);
  return seq;
}

std::size_t count_masks(const TokenSequence& seq) {
  return static_cast<std::size_t>(std::count(seq.ids.begin(), seq.ids.end(), special::kMask));
}

std::string random_document(RandomSource& rng) {
  static const std::vector<std::string> words = {"alpha", "beta", "gamma", "كتاب", "قلم", "x", "y"};
  static const std::vector<std::string> stops = {".", "!", "?", "؟"};
  std::string doc;
  const std::size_t sentences = 1 + rng.below(6);
  for (std::size_t s = 0; s < sentences; ++s) {
    if (s) doc += ' ';
    const std::size_t len = 1 + rng.below(5);
    for (std::size_t w = 0; w < len; ++w) {
      if (w) doc += ' ';
      doc += words[rng.below(words.size())];
    }
    doc += stops[rng.below(stops.size())];
  }
  return doc;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("span lengths follow Poisson(3.5)") {
  SplitMix64 rng(1);
  constexpr int kDraws = 100000;
  double sum = 0.0;
  int zeros = 0;
  for (int i = 0; i < kDraws; ++i) {
    const auto k = sample_span_length(3.5, rng);
    sum += static_cast<double>(k);
    zeros += k == 0;
  }
  const double mean = sum / kDraws;
  CHECK(mean >= 3.40);
  CHECK(mean <= 3.60);
  CHECK(std::abs(static_cast<double>(zeros) / kDraws - std::exp(-3.5)) <= 0.005);

  SplitMix64 a(42);
  SplitMix64 b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(sample_span_length(3.5, a) == sample_span_length(3.5, b));
}

TEST_CASE("text_infill with zero ratio is the identity") {
  NoiseConfig cfg;
  cfg.mask_ratio = 0.0;
  SplitMix64 rng(3);
  const auto seq = source_of(25);
  CHECK(text_infill(seq, cfg, rng) == seq);
}

TEST_CASE("text_infill scripted trace") {
  // Budget round(0.3 * 10) = 3. First span k=2 placed at start index 3 of
  // the valid starts {0..8}; second span k=1 at index 0 of the unmasked
  // positions {0,1,2,5,...,9}.
  NoiseConfig cfg;
  cfg.mask_ratio = 0.3;
  oracle::ScriptedRandom rng({3, 0}, {2, 1});
  const auto seq = source_of(10);
  InfillReport report;
  const auto out = text_infill(seq, cfg, rng, &report);
  const std::vector<int> expected = {special::kMask, 101, 102, special::kMask, 105, 106, 107, 108, 109,
                                     special::kEos};
  CHECK(out.ids == expected);
  CHECK(out.content().size() == 9);
  CHECK(report.budget == 3);
  CHECK(report.masked == 3);
  CHECK(report.spans == 2);
  CHECK(report.inserted == 0);
  CHECK(seq == source_of(10));
}

TEST_CASE("text_infill inserts a mask for a zero-length span without consuming budget") {
  NoiseConfig cfg;
  cfg.mask_ratio = 0.2;  // budget 2 of 10
  oracle::ScriptedRandom rng({4, 0}, {0, 2});
  InfillReport report;
  const auto out = text_infill(source_of(10), cfg, rng, &report);
  const std::vector<int> expected = {special::kMask, 102, 103, special::kMask, 104, 105, 106, 107, 108, 109,
                                     special::kEos};
  CHECK(out.ids == expected);
  CHECK(report.inserted == 1);
  CHECK(report.masked == 2);
}

TEST_CASE("text_infill truncates spans to the longest unmasked run") {
  NoiseConfig cfg;
  cfg.mask_ratio = 0.6;  // budget 3 of 5
  // k=1 at position 2 splits the content into runs of 2; k=9 is cut to 2.
  oracle::ScriptedRandom rng({2, 1}, {1, 9});
  InfillReport report;
  const auto out = text_infill(source_of(5), cfg, rng, &report);
  // Valid starts for length 2 are {0, 3}; index 1 picks 3.
  const std::vector<int> expected = {100, 101, special::kMask, special::kMask, special::kEos};
  CHECK(out.ids == expected);
  CHECK(report.masked == 3);
  CHECK(report.spans == 2);
}

TEST_CASE("text_infill keeps bos and eos on targets") {
  NoiseConfig cfg;
  cfg.mask_ratio = 0.5;
  SplitMix64 rng(11);
  TokenSequence tgt{{special::kBos, 10, 11, 12, 13, 14, 15, special::kEos}, SeqKind::kTarget};
  const auto out = text_infill(tgt, cfg, rng);
  CHECK(out.ids.front() == special::kBos);
  CHECK(out.ids.back() == special::kEos);
  CHECK(out.kind == SeqKind::kTarget);
}

TEST_CASE("text_infill invariants on random sequences") {
  SplitMix64 rng(12);
  NoiseConfig cfg;
  for (int trial = 0; trial < 3000; ++trial) {
    cfg.mask_ratio = static_cast<double>(rng.below(95)) / 100.0;
    cfg.poisson_lambda = 0.5 + static_cast<double>(rng.below(60)) / 10.0;
    const std::size_t n = 1 + rng.below(60);
    const auto seq = source_of(n);
    InfillReport report;
    const auto out = text_infill(seq, cfg, rng, &report);

    REQUIRE(out.ids.back() == special::kEos);
    CHECK(std::count(out.ids.begin(), out.ids.end(), special::kEos) == 1);

    // Surviving tokens are the originals, in order, minus exactly the
    // masked count.
    std::vector<int> kept;
    for (int id : out.content()) {
      if (id != special::kMask) kept.push_back(id);
    }
    CHECK(kept.size() == n - report.masked);
    CHECK(std::is_sorted(kept.begin(), kept.end()));
    CHECK(std::adjacent_find(kept.begin(), kept.end()) == kept.end());

    CHECK(count_masks(out) <= report.spans);
    CHECK(count_masks(out) >= (report.masked > 0 ? 1u : 0u));
    CHECK(report.masked >= report.budget);
    // Reaching the budget stops sampling, so the overshoot is less than one
    // span and, in particular, less than the whole content.
    if (report.budget > 0) CHECK(report.masked < report.budget + n);
    CHECK(report.budget == static_cast<std::size_t>(std::llround(cfg.mask_ratio * static_cast<double>(n))));
  }
}

TEST_CASE("masked fraction over a 100k-token corpus is near 30%") {
  NoiseConfig cfg;
  std::size_t masked = 0;
  std::size_t total = 0;
  for (std::uint64_t doc = 0; total < 100000; ++doc) {
    SplitMix64 rng(mix_seed(99, doc));
    InfillReport report;
    (void)text_infill(source_of(500), cfg, rng, &report);
    masked += report.masked;
    total += 500;
  }
  const double frac = static_cast<double>(masked) / static_cast<double>(total);
  CHECK(frac >= 0.28);
  CHECK(frac <= 0.32);
}

TEST_CASE("permute_sentences examples") {
  SplitMix64 rng(13);
  CHECK(permute_sentences("a.", rng) == "a.");
  CHECK(permute_sentences("no stop at all", rng) == "no stop at all");
  oracle::ScriptedRandom swap({0}, {});
  CHECK(permute_sentences("a. b.", swap) == "b. a.");
  oracle::ScriptedRandom keep({1}, {});
  CHECK(permute_sentences("a. b.", keep) == "a. b.");
}

TEST_CASE("permute_sentences is uniform over orders") {
  SplitMix64 rng(14);
  std::map<std::string, int> counts;
  constexpr int kTrials = 10000;
  for (int i = 0; i < kTrials; ++i) ++counts[permute_sentences("a. b. c.", rng)];
  CHECK(counts.size() == 6);
  for (const auto& [order, n] : counts) {
    CHECK_MESSAGE(std::abs(static_cast<double>(n) / kTrials - 1.0 / 6.0) <= 0.02, order);
  }
}

TEST_CASE("permute_sentences preserves the sentence multiset") {
  SplitMix64 rng(15);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::string doc = random_document(rng);
    const auto before = sorted(textnorm::split_sentences(doc));
    const std::string once = permute_sentences(doc, rng);
    REQUIRE(sorted(textnorm::split_sentences(once)) == before);
    const std::string twice = permute_sentences(once, rng);
    CHECK(sorted(textnorm::split_sentences(twice)) == before);
    if (before.size() == 1) CHECK(once == doc);
  }
}

TEST_CASE("make_pretrain_pair") {
  SplitMix64 rng(16);
  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(random_document(rng));
  const auto vocab = Vocabulary::train(corpus, 80, 1.0);

  SUBCASE("no-op noise keeps the content") {
    NoiseConfig cfg;
    cfg.mask_ratio = 0.0;
    cfg.permute_sentences = false;
    for (std::uint64_t i = 0; i < 50; ++i) {
      const auto pair = make_pretrain_pair(corpus[i], vocab, cfg, i);
      CHECK(pair.source.kind == SeqKind::kSource);
      CHECK(pair.target.kind == SeqKind::kTarget);
      CHECK(std::vector<int>(pair.source.content().begin(), pair.source.content().end()) ==
            std::vector<int>(pair.target.content().begin(), pair.target.content().end()));
    }
  }
  SUBCASE("target is the clean encoding and pairs are reproducible") {
    NoiseConfig cfg;
    cfg.seed = 7;
    for (std::uint64_t i = 0; i < 200; ++i) {
      const auto a = make_pretrain_pair(corpus[i], vocab, cfg, i);
      const auto b = make_pretrain_pair(corpus[i], vocab, cfg, i);
      CHECK(a.target == vocab.encode(corpus[i], SeqKind::kTarget));
      CHECK(a.source == b.source);
      CHECK(pair_to_jsonl(a, i) == pair_to_jsonl(b, i));
      CHECK(a.source.ids.back() == special::kEos);
      CHECK(a.target.ids.front() == special::kBos);
      CHECK(a.target.ids.back() == special::kEos);
    }
  }
  SUBCASE("nonempty text with a positive budget always gets a mask") {
    NoiseConfig cfg;
    cfg.seed = 8;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      const auto& text = corpus[i % corpus.size()];
      const auto pair = make_pretrain_pair(text, vocab, cfg, i);
      const auto n = vocab.encode(text, SeqKind::kSource).content().size();
      if (std::llround(cfg.mask_ratio * static_cast<double>(n)) >= 1) CHECK(count_masks(pair.source) >= 1);
    }
  }
  SUBCASE("different example indices use different streams") {
    NoiseConfig cfg;
    int differing = 0;
    for (std::uint64_t i = 0; i < 50; ++i) {
      differing += make_pretrain_pair(corpus[0], vocab, cfg, i).source !=
                   make_pretrain_pair(corpus[0], vocab, cfg, i + 1000).source;
    }
    CHECK(differing > 25);
  }
}

TEST_CASE("pair_to_jsonl layout") {
  PretrainPair pair{{{4, 9, 3}, SeqKind::kSource}, {{2, 7, 9, 3}, SeqKind::kTarget}};
  CHECK(pair_to_jsonl(pair, 12) == R"({"src_ids":[4,9,3],"tgt_ids":[2,7,9,3],"example_index":12})");
  const auto j = nlohmann::json::parse(pair_to_jsonl(pair, 12));
  CHECK(j.size() == 3);
}

TEST_CASE("NoiseConfig validation") {
  NoiseConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.mask_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.mask_ratio = -0.1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.mask_ratio = 0.3;
  cfg.poisson_lambda = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
