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

#include "bartlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "json.hpp"

#include "bartlab/error.hpp"
#include "bartlab/utf8.hpp"

namespace bartlab::metrics {
namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

RougeScore from_counts(std::size_t overlap, std::size_t cand_total, std::size_t ref_total) {
  RougeScore s;
  if (cand_total == 0 || ref_total == 0) return s;
  s.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
  s.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

void accumulate(RougeScore& acc, const RougeScore& s) {
  acc.precision += s.precision;
  acc.recall += s.recall;
  acc.f1 += s.f1;
}

void scale(RougeScore& s, double k) {
  s.precision *= k;
  s.recall *= k;
  s.f1 *= k;
}

nlohmann::ordered_json to_json(const RougeScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

nlohmann::ordered_json to_json(const RougeSet& s) {
  return {{"rouge1", to_json(s.r1)}, {"rouge2", to_json(s.r2)}, {"rougeL", to_json(s.rl)}};
}

// Runs followed by one macro row per model that has several runs.
std::vector<RunRow> with_macro_rows(std::span<const RunRow> rows) {
  std::vector<RunRow> out(rows.begin(), rows.end());
  std::vector<std::string> models;
  for (const auto& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  for (const auto& m : models) {
    std::vector<RougeSet> runs;
    for (const auto& r : rows) {
      if (r.model == m) runs.push_back(r.scores);
    }
    if (runs.size() > 1) out.push_back({"macro", m, macro_average(runs)});
  }
  return out;
}

}  // namespace

Tokens eval_tokens(std::string_view text, const textnorm::NormRules& rules) {
  return utf8::split_whitespace(textnorm::normalize_eval(text, rules));
}

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n) {
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    const auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  const std::size_t cand_total = candidate.size() >= n && n > 0 ? candidate.size() - n + 1 : 0;
  const std::size_t ref_total = reference.size() >= n && n > 0 ? reference.size() - n + 1 : 0;
  return from_counts(overlap, cand_total, ref_total);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return from_counts(lcs_length(candidate, reference), candidate.size(), reference.size());
}

RougeSet rouge_all(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2), rouge_l(candidate, reference)};
}

double novel_ngram_pct(std::span<const std::string> document, std::span<const std::string> summary, std::size_t n) {
  if (n == 0 || summary.size() < n) {
    fail(Errc::kSummaryTooShort, "summary has " + std::to_string(summary.size()) + " tokens, need " +
                                     std::to_string(n));
  }
  const auto doc = ngram_counts(document, n);
  const auto sum = ngram_counts(summary, n);
  std::size_t novel = 0;
  for (const auto& [gram, c] : sum) novel += !doc.contains(gram);
  return 100.0 * static_cast<double>(novel) / static_cast<double>(sum.size());
}

AbstractivenessStats corpus_stats(std::span<const DocSummary> pairs, const textnorm::NormRules& rules) {
  if (pairs.empty()) fail(Errc::kEmptyDataset, "no examples for corpus statistics");
  AbstractivenessStats st;
  st.examples = pairs.size();
  std::array<double, 3> novel_sum{};
  std::array<std::size_t, 3> novel_n{};
  for (const auto& p : pairs) {
    const auto doc = eval_tokens(p.document, rules);
    const auto sum = eval_tokens(p.summary, rules);
    st.avg_doc_tokens += static_cast<double>(doc.size());
    st.avg_summary_tokens += static_cast<double>(sum.size());
    for (std::size_t n = 1; n <= 3; ++n) {
      if (sum.size() < n) continue;
      novel_sum[n - 1] += novel_ngram_pct(doc, sum, n);
      ++novel_n[n - 1];
    }
  }
  const auto count = static_cast<double>(pairs.size());
  st.avg_doc_tokens /= count;
  st.avg_summary_tokens /= count;
  for (std::size_t k = 0; k < 3; ++k) {
    if (novel_n[k] > 0) st.novel_pct[k] = novel_sum[k] / static_cast<double>(novel_n[k]);
  }
  return st;
}

RunScores evaluate_run(std::span<const std::string> hypotheses, std::span<const std::string> references,
                       const textnorm::NormRules& rules) {
  if (hypotheses.size() != references.size()) {
    fail(Errc::kLengthMismatch, std::to_string(hypotheses.size()) + " hypotheses vs " +
                                    std::to_string(references.size()) + " references");
  }
  RunScores out;
  out.per_example.reserve(hypotheses.size());
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    out.per_example.push_back(rouge_all(eval_tokens(hypotheses[i], rules), eval_tokens(references[i], rules)));
  }
  out.mean = macro_average(out.per_example);
  return out;
}

RougeSet macro_average(std::span<const RougeSet> runs) {
  RougeSet mean;
  if (runs.empty()) return mean;
  for (const auto& r : runs) {
    accumulate(mean.r1, r.r1);
    accumulate(mean.r2, r.r2);
    accumulate(mean.rl, r.rl);
  }
  const double k = 1.0 / static_cast<double>(runs.size());
  scale(mean.r1, k);
  scale(mean.r2, k);
  scale(mean.rl, k);
  return mean;
}

std::string one_decimal(std::optional<double> value) {
  if (!value) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", *value);
  return buf;
}

std::string render_rouge_csv(std::span<const RunRow> rows) {
  std::string out = "dataset,model,R1,R2,RL\n";
  for (const auto& r : with_macro_rows(rows)) {
    out += r.dataset + "," + r.model + "," + one_decimal(100.0 * r.scores.r1.f1) + "," +
           one_decimal(100.0 * r.scores.r2.f1) + "," + one_decimal(100.0 * r.scores.rl.f1) + "\n";
  }
  return out;
}

std::string render_rouge_json(std::span<const RunRow> rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : with_macro_rows(rows)) {
    arr.push_back({{"dataset", r.dataset}, {"model", r.model}, {"scores", to_json(r.scores)}});
  }
  return arr.dump(2) + "\n";
}

std::string render_stats_table(std::span<const NamedStats> columns) {
  std::string out = "group,row";
  for (const auto& c : columns) out += "," + c.dataset;
  out += "\n";
  auto line = [&](const std::string& group, const std::string& row, auto value) {
    out += group + "," + row;
    for (const auto& c : columns) out += "," + one_decimal(value(c.stats));
    out += "\n";
  };
  line("#tokens", "document", [](const AbstractivenessStats& s) { return std::optional(s.avg_doc_tokens); });
  line("#tokens", "summary", [](const AbstractivenessStats& s) { return std::optional(s.avg_summary_tokens); });
  const char* names[3] = {"unigrams", "bigrams", "trigrams"};
  for (std::size_t k = 0; k < 3; ++k) {
    line("%novel n-grams", names[k], [k](const AbstractivenessStats& s) { return s.novel_pct[k]; });
  }
  return out;
}

std::string render_stats_json(std::span<const NamedStats> columns) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : columns) {
    nlohmann::ordered_json novel;
    const char* keys[3] = {"1", "2", "3"};
    for (std::size_t k = 0; k < 3; ++k) {
      novel[keys[k]] = c.stats.novel_pct[k] ? nlohmann::ordered_json(*c.stats.novel_pct[k]) : nullptr;
    }
    arr.push_back({{"dataset", c.dataset},
                   {"examples", c.stats.examples},
                   {"avg_doc_tokens", c.stats.avg_doc_tokens},
                   {"avg_summary_tokens", c.stats.avg_summary_tokens},
                   {"novel_pct", novel}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace bartlab::metrics
