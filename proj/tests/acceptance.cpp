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

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <path-to-bartlab-cli> [criterion numbers...]
//
// With no numbers every criterion runs. Exit status is 0 only if all the
// selected criteria pass.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bartlab/data.hpp"
#include "bartlab/decode.hpp"
#include "bartlab/metrics.hpp"
#include "bartlab/model.hpp"
#include "bartlab/noising.hpp"
#include "bartlab/optim.hpp"
#include "bartlab/rng.hpp"
#include "bartlab/textnorm.hpp"
#include "bartlab/tokenizer.hpp"
#include "bartlab/utf8.hpp"
#include "decode_fixtures.hpp"
#include "metric_fixtures.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace bartlab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

fs::path g_cli;

// ---------------------------------------------------------------- 1
Verdict gradients() {
  const double t0 = cpu_seconds();
  const auto cfg = oracle::tiny_config();
  const Batch batch = oracle::random_batch(cfg.vocab_size, 2, 6, 21);
  const auto at_init = oracle::check_all_gradients(init_params<double>(cfg, 5), cfg, batch);
  // Weights spread well past initialization so every nonlinearity is off
  // its linear regime.
  auto spread = init_params<double>(cfg, 6);
  SplitMix64 rng(6 ^ 0xabcdef);
  for (auto& t : spread.tensors) {
    for (double& x : t.data) x = x * 25.0 + 0.1 * rng.normal();
  }
  const auto away = oracle::check_all_gradients(spread, cfg, batch);
  const double secs = cpu_seconds() - t0;
  const double worst = std::max(at_init.max_rel_error, away.max_rel_error);
  return {worst < 1e-4 && secs < 60.0,
          fmt("%.0f coordinates x 2 parameter points, max relative error %.2e (< 1e-4), %.1f s (< 60 s)",
              static_cast<double>(at_init.coordinates), worst, secs)};
}

// ---------------------------------------------------------------- 2
Verdict noise_statistics() {
  const double t0 = cpu_seconds();
  NoiseConfig cfg;
  std::size_t masked = 0;
  std::size_t total = 0;
  for (std::uint64_t doc = 0; total < 100000; ++doc) {
    TokenSequence seq{{}, SeqKind::kSource};
    for (int i = 0; i < 500; ++i) seq.ids.push_back(100 + i);
    seq.ids.push_back(special::kEos);
    SplitMix64 rng(mix_seed(2024, doc));
    InfillReport report;
    (void)text_infill(seq, cfg, rng, &report);
    masked += report.masked;
    total += 500;
  }
  const double frac = static_cast<double>(masked) / static_cast<double>(total);

  SplitMix64 rng(7);
  constexpr int kDraws = 100000;
  double sum = 0.0;
  int zeros = 0;
  for (int i = 0; i < kDraws; ++i) {
    const auto k = sample_span_length(3.5, rng);
    sum += static_cast<double>(k);
    zeros += k == 0;
  }
  const double mean = sum / kDraws;
  const double p0 = static_cast<double>(zeros) / kDraws;
  const double secs = cpu_seconds() - t0;
  const bool ok = frac >= 0.28 && frac <= 0.32 && mean >= 3.40 && mean <= 3.60 &&
                  std::abs(p0 - std::exp(-3.5)) <= 0.005 && secs < 30.0;
  return {ok, fmt("masked fraction %.4f over 100k tokens, span mean %.4f, P(k=0) %.4f vs %.4f", frac, mean, p0,
                  std::exp(-3.5)) +
                  fmt(", %.1f s", secs)};
}

// ---------------------------------------------------------------- 3
Verdict parameter_accounting() {
  const ModelConfig base;  // 6/6 layers, 768, 12 heads, 3072, 50k vocab, 1024 positions
  const auto total = count_params(base);
  bool tallies = true;
  SplitMix64 rng(33);
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig cfg;
    cfg.enc_layers = 1 + rng.below(3);
    cfg.dec_layers = 1 + rng.below(3);
    cfg.n_heads = 1 + rng.below(4);
    cfg.d_model = cfg.n_heads * (1 + rng.below(6));
    cfg.d_ffn = 1 + rng.below(40);
    cfg.vocab_size = 6 + rng.below(50);
    cfg.max_positions = 1 + rng.below(30);
    cfg.final_layernorm = rng.below(2) == 1;
    const auto params = init_params<float>(cfg, static_cast<std::uint64_t>(trial));
    std::uint64_t tally = 0;
    for (const auto& t : params.tensors) tally += t.data.size();
    tallies = tallies && tally == count_params(cfg);
  }
  return {total >= 133'000'000 && total <= 145'000'000 && tallies,
          fmt("base configuration %.0f parameters (range [133M, 145M]); closed form ", static_cast<double>(total)) +
              (tallies ? "equals" : "DIFFERS FROM") + " the tensor tally on 6 random configs"};
}

// ---------------------------------------------------------------- 4
Verdict denoising_learnability() {
  const double t0 = cpu_seconds();
  const auto corpus = synthetic::corpus(4000, 1);
  const auto vocab = Vocabulary::train(corpus, 128, 1.0);

  ModelConfig mcfg;
  mcfg.enc_layers = 2;
  mcfg.dec_layers = 2;
  mcfg.d_model = 48;
  mcfg.n_heads = 4;
  mcfg.d_ffn = 192;
  mcfg.vocab_size = vocab.size();
  mcfg.max_positions = 80;
  mcfg.dropout = 0.0;
  TrainConfig tcfg;
  tcfg.peak_lr = 2e-3;
  tcfg.warmup_frac = 0.06;
  tcfg.total_steps = 900;
  tcfg.epochs = 100;
  tcfg.update_frequency = 2;
  tcfg.max_tokens = 1024;
  tcfg.dropout_schedule = {{4, 0.1}, {5, 0.0}};
  tcfg.seed = 11;
  NoiseConfig ncfg;
  ncfg.seed = 12;
  const auto result = pretrain(corpus, vocab, mcfg, tcfg, ncfg);
  const double train_secs = cpu_seconds() - t0;

  // Held-out documents, noised with a stream the training never used.
  const auto held_out = synthetic::corpus(200, 99);
  NoiseConfig eval_noise = ncfg;
  eval_noise.seed = 777;
  std::vector<TokenSequence> src;
  std::vector<TokenSequence> tgt;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    auto pair = fit_to_positions(make_pretrain_pair(held_out[i], vocab, eval_noise, i), mcfg.max_positions);
    src.push_back(std::move(pair.source));
    tgt.push_back(std::move(pair.target));
  }
  const Batch batch = make_batch(src, tgt);
  const double acc = token_accuracy(forward(result.trainer.params, mcfg, batch), batch.targets, special::kPad);
  return {acc > 0.90 && train_secs < 1800.0,
          fmt("held-out reconstruction accuracy %.4f (> 0.90) after %.0f updates, %.0f CPU s (< 1800 s)", acc,
              static_cast<double>(result.trainer.opt.step), train_secs)};
}

// ---------------------------------------------------------------- 5
Verdict overfit() {
  const double t0 = cpu_seconds();
  const auto docs = synthetic::corpus(8, 55);
  std::vector<SummaryPair> pairs;
  std::vector<std::string> texts;
  for (const auto& d : docs) {
    pairs.push_back({d, textnorm::split_sentences(d).front()});
    texts.push_back(pairs.back().document);
    texts.push_back(pairs.back().summary);
  }
  const auto vocab = Vocabulary::train(texts, 64, 1.0);
  ModelConfig mcfg;
  mcfg.enc_layers = 1;
  mcfg.dec_layers = 1;
  mcfg.d_model = 32;
  mcfg.n_heads = 4;
  mcfg.d_ffn = 64;
  mcfg.vocab_size = vocab.size();
  mcfg.max_positions = 128;
  mcfg.dropout = 0.0;
  TrainConfig tcfg = TrainConfig::finetune_defaults();
  tcfg.peak_lr = 3e-3;
  tcfg.warmup_frac = 0.05;
  tcfg.total_steps = 2000;
  tcfg.epochs = 2000;
  tcfg.max_tokens = 1100;  // all eight pairs in one batch
  const auto result = finetune(pairs, vocab, mcfg, tcfg);
  std::uint64_t first_below = 0;
  for (const auto& r : result.records) {
    if (r.loss < 0.1) {
      first_below = r.step;
      break;
    }
  }
  const double final_loss = result.records.back().loss;
  const double train_secs = cpu_seconds() - t0;

  BeamConfig beam;
  beam.beam_size = 3;
  beam.max_length = 40;
  int exact = 0;
  for (const auto& p : pairs) {
    auto clipped = fit_to_positions({vocab.encode(p.document, SeqKind::kSource), {}}, mcfg.max_positions);
    const std::vector<TokenSequence> src = {std::move(clipped.source)};
    const auto h = generate<float>(result.trainer.params, mcfg, src, beam).front();
    exact += vocab.decode(h.tokens.ids) == p.summary;
  }
  const bool ok = first_below > 0 && final_loss < 0.1 && exact == 8 && train_secs < 300.0;
  return {ok, fmt("loss < 0.1 first at update %.0f, final %.4f; beam-3 exact %.0f/8; %.0f CPU s (< 300 s)",
                  static_cast<double>(first_below), final_loss, exact, train_secs)};
}

// ---------------------------------------------------------------- 6

// Every list over {a, b, c} of length <= 8, indexed by length then by
// base-3 value: index = (3^len - 1) / 2 + value.
struct AllLists {
  static constexpr int kMaxLen = 8;
  std::vector<std::vector<std::string>> tokens;
  std::vector<int> length;
  std::vector<std::vector<std::uint32_t>> subsequences;  // distinct, descending index
  std::vector<std::vector<std::uint64_t>> subseq_bits;

  AllLists() {
    std::vector<std::uint32_t> offset(kMaxLen + 2, 0);
    for (int l = 1; l <= kMaxLen + 1; ++l) offset[l] = offset[l - 1] * 3 + 1;
    const std::uint32_t n = offset[kMaxLen + 1];
    const std::size_t words = (n + 63) / 64;
    tokens.resize(n);
    length.resize(n);
    subsequences.resize(n);
    subseq_bits.assign(n, std::vector<std::uint64_t>(words, 0));
    std::vector<std::vector<int>> symbols(n);
    for (int l = 0; l <= kMaxLen; ++l) {
      std::uint32_t count = 1;
      for (int i = 0; i < l; ++i) count *= 3;
      for (std::uint32_t v = 0; v < count; ++v) {
        const std::uint32_t idx = offset[l] + v;
        length[idx] = l;
        std::uint32_t rest = v;
        symbols[idx].resize(static_cast<std::size_t>(l));
        for (int i = l - 1; i >= 0; --i) {
          symbols[idx][static_cast<std::size_t>(i)] = static_cast<int>(rest % 3);
          rest /= 3;
        }
        for (int s : symbols[idx]) tokens[idx].push_back(std::string(1, static_cast<char>('a' + s)));
      }
    }
    for (std::uint32_t idx = 0; idx < n; ++idx) {
      const auto& sym = symbols[idx];
      std::set<std::uint32_t> subs;
      for (std::uint32_t mask = 0; mask < (1u << sym.size()); ++mask) {
        std::uint32_t value = 0;
        int len = 0;
        for (std::size_t i = 0; i < sym.size(); ++i) {
          if (mask & (1u << i)) {
            value = value * 3 + static_cast<std::uint32_t>(sym[i]);
            ++len;
          }
        }
        subs.insert(offset[len] + value);
      }
      subsequences[idx].assign(subs.rbegin(), subs.rend());
      for (auto s : subs) subseq_bits[idx][s / 64] |= 1ull << (s % 64);
    }
  }

  // Longest list that is a subsequence of both: scan b's subsequences from
  // the longest down and stop at the first one a also contains.
  int brute_lcs(std::uint32_t a, std::uint32_t b) const {
    const auto& bits = subseq_bits[a];
    for (auto s : subsequences[b]) {
      if (bits[s / 64] >> (s % 64) & 1) return length[s];
    }
    return 0;
  }
};

Verdict rouge_oracle() {
  const double t0 = cpu_seconds();
  const auto cases = fixtures::rouge_cases();
  int fixture_fail = 0;
  for (const auto& c : cases) {
    const auto got = fixtures::score_case(c);
    // Precision and recall are single divisions of counts, so they must be
    // bit-exact; F1 is compared to 1e-15 relative (one rounding step).
    const bool ok = got.precision == c.precision && got.recall == c.recall &&
                    std::abs(got.f1 - c.f1) <= 1e-15 * std::max(1.0, std::abs(c.f1));
    fixture_fail += !ok;
  }

  const AllLists lists;
  const auto n = static_cast<std::uint32_t>(lists.tokens.size());
  std::uint64_t pairs = 0;
  std::uint64_t mismatches = 0;
  for (std::uint32_t a = 0; a < n; ++a) {
    for (std::uint32_t b = 0; b < n; ++b) {
      const int lcs = lists.brute_lcs(a, b);
      const auto rl = metrics::rouge_l(lists.tokens[a], lists.tokens[b]);
      const double p = lists.length[a] ? static_cast<double>(lcs) / lists.length[a] : 0.0;
      const double r = lists.length[b] ? static_cast<double>(lcs) / lists.length[b] : 0.0;
      mismatches += rl.precision != p || rl.recall != r;
      ++pairs;
    }
  }
  const double secs = cpu_seconds() - t0;
  return {fixture_fail == 0 && cases.size() >= 20 && mismatches == 0,
          fmt("%.0f hand fixtures, %.0f wrong; ROUGE-L vs subsequence enumeration on %.0f ordered pairs of lists "
              "(length <= 8, alphabet 3), %.0f mismatches",
              static_cast<double>(cases.size()), fixture_fail, static_cast<double>(pairs),
              static_cast<double>(mismatches)) +
              fmt(", %.0f s", secs)};
}

// ---------------------------------------------------------------- 7
Verdict beam_search_checks() {
  const auto cfg = oracle::tiny_config();
  SplitMix64 rng(101);
  int greedy_mismatch = 0;
  double worst_rescore = 0.0;
  for (std::uint64_t m = 0; m < 100; ++m) {
    const auto params = fixtures::peaked_params(cfg, 5000 + m);
    const auto src = fixtures::random_source(cfg.vocab_size, rng);
    ModelScorer<double> scorer(params, cfg, src.ids);
    const auto g = greedy(scorer, 12);
    BeamConfig one;
    one.beam_size = 1;
    one.max_length = 12;
    const auto b1 = beam_search(scorer, one);
    greedy_mismatch += b1.tokens != g.tokens || b1.score != g.score;
    BeamConfig three = one;
    three.beam_size = 3;
    worst_rescore = std::max(worst_rescore, std::abs(b1.score - fixtures::rescore(params, cfg, src, b1.tokens.ids)));
    const auto b3 = beam_search(scorer, three);
    worst_rescore = std::max(worst_rescore, std::abs(b3.score - fixtures::rescore(params, cfg, src, b3.tokens.ids)));
  }

  FunctionScorer crafted(8, fixtures::crafted);
  const auto g = greedy(crafted, 3);
  BeamConfig two;
  two.beam_size = 2;
  two.max_length = 3;
  const auto b = beam_search(crafted, two);
  const auto best = fixtures::exhaustive(fixtures::crafted, 8, 3);
  const bool fixture_ok = b.tokens.ids == best.ids && std::abs(b.score - best.score) < 1e-12 && g.score < b.score;
  return {greedy_mismatch == 0 && worst_rescore < 1e-6 && fixture_ok,
          fmt("beam 1 != greedy on %.0f/100 models; worst rescoring gap %.2e (< 1e-6); crafted fixture: greedy p=%.3f, "
              "beam 2 p=%.3f",
              greedy_mismatch, worst_rescore, std::exp(g.score), std::exp(b.score)) +
              (fixture_ok ? ", optimal over " + std::to_string(best.count) + " enumerated sequences"
                          : ", NOT optimal")};
}

// ---------------------------------------------------------------- 8
Verdict lr_schedule() {
  TrainConfig cfg;
  cfg.total_steps = 1000;
  const double peak = cfg.peak_lr;
  const auto w = static_cast<std::size_t>(std::llround(0.06 * 1000));
  const double tol = 4 * std::numeric_limits<double>::epsilon() * peak;
  const double l0 = lr_at(0, cfg);
  const double lw = lr_at(w, cfg);
  const double lt = lr_at(1000, cfg);
  const double mid = lr_at((w + 1000) / 2, cfg);
  const bool ok = l0 == 0.0 && std::abs(lw - peak) <= tol && lt == 0.0 && std::abs(mid - peak / 2) <= tol;
  return {ok, fmt("lr(0)=%g, lr(60)=%.17g, lr(1000)=%g, lr(530)=%.17g", l0, lw, lt, mid) +
                  fmt(" (peak %g, tolerance %.1e)", peak, tol)};
}

// ---------------------------------------------------------------- 9
std::string random_arabic(RandomSource& rng) {
  static const std::u32string kRuleChars = U"ـًَِّْٰآأإى"
                                           U"،؛؟.,!?:()\"- \t\n";
  std::u32string out;
  const auto n = rng.below(41);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.below(3) == 0) {
      out += kRuleChars[rng.below(kRuleChars.size())];
    } else {
      out += static_cast<char32_t>(0x0600 + rng.below(0x100));
    }
  }
  return utf8::encode(out);
}

std::string random_sentence(RandomSource& rng) {
  static const std::vector<std::string> words = {"كتب", "الولد", "قلم", "مدرسة", "alpha", "x7", "على"};
  static const std::vector<std::string> stops = {".", "!", "?", "؟"};
  std::string s;
  const auto len = 1 + rng.below(6);
  for (std::size_t w = 0; w < len; ++w) s += (w ? " " : "") + words[rng.below(words.size())];
  return s + stops[rng.below(stops.size())];
}

Verdict invariants() {
  SplitMix64 rng(909);
  int not_idempotent = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto once = textnorm::normalize_eval(random_arabic(rng));
    not_idempotent += textnorm::normalize_eval(once) != once;
  }
  int multiset_broken = 0;
  int single_moved = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string doc;
    const auto m = 1 + rng.below(7);
    for (std::size_t s = 0; s < m; ++s) doc += (s ? " " : "") + random_sentence(rng);
    auto before = textnorm::split_sentences(doc);
    auto after = textnorm::split_sentences(permute_sentences(doc, rng));
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    multiset_broken += before != after;
    const std::string single = random_sentence(rng);
    single_moved += permute_sentences(single, rng) != single;
  }
  return {not_idempotent == 0 && multiset_broken == 0 && single_moved == 0,
          fmt("normalize_eval not idempotent on %.0f/10000 strings; sentence multiset changed on %.0f/10000 "
              "documents; single sentence moved on %.0f/10000",
              not_idempotent, multiset_broken, single_moved)};
}

// ---------------------------------------------------------------- 10
std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

int sh(const std::string& cmd, const fs::path& log) {
  return std::system((cmd + " >>" + quote(log) + " 2>&1").c_str());
}

// tokenizer -> pretrain 200 -> finetune 200 -> generate -> evaluate.
bool pipeline(const fs::path& dir, const fs::path& inputs, std::string& why) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto log = dir / "log.txt";
  const std::string cli = quote(g_cli);
  const std::string model =
      " --model.enc_layers 1 --model.dec_layers 1 --model.d_model 16 --model.n_heads 2 --model.d_ffn 32"
      " --model.max_positions 64 --seed 5 --deterministic --log-every 0";
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"train-tokenizer", cli + " train-tokenizer --corpus " + quote(inputs / "corpus.txt") +
                              " --vocab-size 100 --out " + quote(dir / "vocab.txt")},
      {"pretrain", cli + " pretrain --corpus " + quote(inputs / "corpus.txt") + " --vocab " +
                       quote(dir / "vocab.txt") + " --out " + quote(dir / "pre") +
                       " --train.total_steps 200 --train.epochs 1000 --train.max_tokens 600" + model},
      {"finetune", cli + " finetune --data " + quote(inputs / "train.jsonl") + " --vocab " +
                       quote(dir / "vocab.txt") + " --init " + quote(dir / "pre" / checkpoint_name(200)) +
                       " --out " + quote(dir / "ft") +
                       " --train.total_steps 200 --train.epochs 1000 --train.peak_lr 0.001 --train.max_tokens 600" +
                       model},
      {"generate", cli + " generate --checkpoint " + quote(dir / "ft" / checkpoint_name(200)) + " --vocab " +
                       quote(dir / "vocab.txt") + " --data " + quote(inputs / "test.jsonl") + " --out " +
                       quote(dir / "hyps.jsonl") + " --beam 3 --beam.max_length 20 --deterministic"},
      {"evaluate", cli + " evaluate --hyps " + quote(dir / "hyps.jsonl") + " --refs " + quote(inputs / "test.jsonl") +
                       " --out-csv " + quote(dir / "rouge.csv") + " --deterministic"},
  };
  for (const auto& [name, cmd] : steps) {
    if (sh(cmd, log) != 0) {
      why = name + " failed (see " + log.string() + ")";
      return false;
    }
  }
  return true;
}

Verdict reproducibility() {
  if (g_cli.empty() || !fs::exists(g_cli)) return {false, "CLI binary not given or missing: " + g_cli.string()};
  const auto root = fs::temp_directory_path() / "bartlab_acceptance_repro";
  fs::remove_all(root);
  const auto inputs = root / "inputs";
  fs::create_directories(inputs);
  {
    std::ofstream corpus(inputs / "corpus.txt");
    for (const auto& doc : synthetic::corpus(120, 21)) corpus << doc << '\n';
    std::vector<data::Example> train;
    std::vector<data::Example> test;
    const auto docs = synthetic::corpus(24, 22);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      data::Example ex{std::to_string(i), "synthetic", docs[i], textnorm::split_sentences(docs[i]).front()};
      (i < 16 ? train : test).push_back(ex);
    }
    data::write_jsonl(inputs / "train.jsonl", train);
    data::write_jsonl(inputs / "test.jsonl", test);
  }
  std::string why;
  if (!pipeline(root / "run1", inputs, why) || !pipeline(root / "run2", inputs, why)) return {false, why};
  const std::vector<fs::path> compared = {"vocab.txt", fs::path("pre") / "metrics.csv", fs::path("ft") / "metrics.csv",
                                          fs::path("ft") / checkpoint_name(200), "hyps.jsonl", "rouge.csv"};
  std::string differing;
  for (const auto& rel : compared) {
    const auto a = slurp(root / "run1" / rel);
    if (a.empty() || a != slurp(root / "run2" / rel)) differing += " " + rel.string();
  }
  const auto rows = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  const auto pre = slurp(root / "run1" / "pre" / "metrics.csv");
  const auto ft = slurp(root / "run1" / "ft" / "metrics.csv");
  const bool complete = rows(pre) == 201 && rows(ft) == 201;
  return {differing.empty() && complete,
          differing.empty() ? "two runs bit-identical: vocabulary, pretrain and finetune metrics.csv (200 rows each), "
                              "final checkpoint, generations, ROUGE table" +
                                  std::string(complete ? "" : " [row count wrong]")
                            : "differing files:" + differing};
}

// ---------------------------------------------------------------- 11
Verdict stats_tool() {
  const auto kc = fixtures::known_corpus(25);
  const auto st = metrics::corpus_stats(kc.pairs);
  double worst = std::max(std::abs(st.avg_doc_tokens - kc.avg_doc_tokens),
                          std::abs(st.avg_summary_tokens - kc.avg_summary_tokens));
  for (std::size_t k = 0; k < 3; ++k) {
    worst = std::max(worst, st.novel_pct[k] ? std::abs(*st.novel_pct[k] - kc.novel[k]) : INFINITY);
  }
  const std::vector<metrics::NamedStats> cols = {{"known", st}};
  const std::string table = metrics::render_stats_table(cols);
  std::vector<std::string> labels;
  std::istringstream lines(table);
  for (std::string line; std::getline(lines, line);) labels.push_back(line.substr(0, line.rfind(',')));
  const std::vector<std::string> expected = {"group,row",
                                             "#tokens,document",
                                             "#tokens,summary",
                                             "%novel n-grams,unigrams",
                                             "%novel n-grams,bigrams",
                                             "%novel n-grams,trigrams"};
  const bool rows_ok = labels == expected && table.find("unigrams,40.0\n") != std::string::npos;
  return {worst <= 1e-9 && rows_ok,
          fmt("avg document %.4f, summary %.4f tokens; novel n-grams %.4f / %.4f", st.avg_doc_tokens,
              st.avg_summary_tokens, st.novel_pct[0].value_or(NAN), st.novel_pct[1].value_or(NAN)) +
              fmt(" / %.4f %%; max deviation %.1e (<= 1e-9); table rows ", st.novel_pct[2].value_or(NAN), worst) +
              (rows_ok ? "ok" : "WRONG")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_cli = argv[1];
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient correctness", gradients},
      {"noise statistics", noise_statistics},
      {"parameter accounting", parameter_accounting},
      {"denoising learnability", denoising_learnability},
      {"overfit check", overfit},
      {"ROUGE oracle", rouge_oracle},
      {"beam search", beam_search_checks},
      {"LR schedule closed form", lr_schedule},
      {"normalization/permutation invariants", invariants},
      {"reproducibility", reproducibility},
      {"stats tool", stats_tool},
  };
  std::set<std::size_t> selected;
  for (int i = 2; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.contains(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !v.pass;
    std::cout << "criterion " << (i + 1) << (i + 1 < 10 ? "  " : " ") << (v.pass ? "PASS" : "FAIL") << "  "
              << criteria[i].first << ": " << v.detail << fmt(" [%.1f s wall]", secs) << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
