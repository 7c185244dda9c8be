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

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bartlab/textnorm.hpp"

namespace bartlab::metrics {

using Tokens = std::vector<std::string>;

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeSet {
  RougeScore r1;
  RougeScore r2;
  RougeScore rl;
};

/// normalize_eval followed by whitespace splitting.
Tokens eval_tokens(std::string_view text, const textnorm::NormRules& rules = {});

/// Clipped n-gram overlap. Empty n-gram sets on either side give all zeros.
RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

RougeSet rouge_all(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Percentage of distinct summary n-grams absent from the document's
/// n-grams. Throws SummaryTooShort when the summary has fewer than n tokens.
double novel_ngram_pct(std::span<const std::string> document, std::span<const std::string> summary, std::size_t n);

struct AbstractivenessStats {
  std::size_t examples = 0;
  double avg_doc_tokens = 0.0;
  double avg_summary_tokens = 0.0;
  /// Index n-1 for n = 1, 2, 3. Macro average over the examples whose
  /// summary has at least n tokens; nullopt if there are none.
  std::array<std::optional<double>, 3> novel_pct;
};

struct DocSummary {
  std::string document;
  std::string summary;
};

/// Table-style corpus statistics over eval_tokens. Throws EmptyDataset.
AbstractivenessStats corpus_stats(std::span<const DocSummary> pairs, const textnorm::NormRules& rules = {});

struct RunScores {
  std::vector<RougeSet> per_example;
  RougeSet mean;  // arithmetic mean of per-example P, R and F1
};

/// Normalizes both sides, then scores each pair. Throws LengthMismatch.
RunScores evaluate_run(std::span<const std::string> hypotheses, std::span<const std::string> references,
                       const textnorm::NormRules& rules = {});

/// Unweighted mean over runs (e.g. over datasets).
RougeSet macro_average(std::span<const RougeSet> runs);

struct RunRow {
  std::string dataset;
  std::string model;
  RougeSet scores;
};

/// `dataset,model,R1,R2,RL` with F1 x 100 at one decimal. For every model
/// with more than one run a `macro` row follows its runs.
std::string render_rouge_csv(std::span<const RunRow> rows);

/// JSON with per-run precision/recall/F1 and the macro rows.
std::string render_rouge_json(std::span<const RunRow> rows);

struct NamedStats {
  std::string dataset;
  AbstractivenessStats stats;
};

/// CSV in the layout group,row,<dataset...>: two "#tokens" rows (document,
/// summary) and three "%novel n-grams" rows (unigrams, bigrams, trigrams),
/// one decimal.
std::string render_stats_table(std::span<const NamedStats> columns);

std::string render_stats_json(std::span<const NamedStats> columns);

/// One-decimal rendering used by the tables ("n/a" for nullopt).
std::string one_decimal(std::optional<double> value);

}  // namespace bartlab::metrics
