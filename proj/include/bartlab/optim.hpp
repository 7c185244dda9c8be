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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bartlab/model.hpp"
#include "bartlab/noising.hpp"
#include "bartlab/tokenizer.hpp"

namespace bartlab {

/// Epochs [previous until_epoch, until_epoch) train with `rate`. Epochs past
/// the last phase keep the last phase's rate.
struct DropoutPhase {
  std::size_t until_epoch = 0;
  double rate = 0.0;
  bool operator==(const DropoutPhase&) const = default;
};

struct TrainConfig {
  double peak_lr = 6e-4;
  double warmup_frac = 0.06;
  std::size_t total_steps = 0;  // 0: derived from epochs and data
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-6;
  std::size_t update_frequency = 2;
  std::vector<DropoutPhase> dropout_schedule = {{20, 0.1}, {25, 0.0}};
  std::size_t epochs = 25;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 4096;      // per microbatch, padded tokens
  std::size_t checkpoint_every = 0;   // 0: final checkpoint only
  double weight_decay = 0.0;
  double clip_norm = 0.0;             // 0: no clipping

  /// Finetuning recipe: 3 epochs, peak 5e-5, no warmup, linear decay, no
  /// accumulation, no dropout schedule (the model's dropout applies).
  static TrainConfig finetune_defaults();

  void validate() const;

  /// Scheduled dropout for a 0-based epoch; nullopt when no schedule is set.
  std::optional<double> dropout_for_epoch(std::size_t epoch) const;

  bool operator==(const TrainConfig&) const = default;
};

/// Linear warmup to peak over W = min(round(warmup_frac * total_steps),
/// total_steps - 1) updates, then linear decay to 0 at total_steps. Update
/// number s (1-based) uses lr_at(s).
double lr_at(std::size_t step, const TrainConfig& cfg);

struct OptimizerState {
  Parameters<float> m;
  Parameters<float> v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const Parameters<float>& params);
};

/// One bias-corrected Adam update in place. Throws NonFiniteGradient before
/// touching anything if a gradient is NaN or infinite.
void adam_step(Parameters<float>& params, const Parameters<float>& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg);

/// Model, optimizer and position in the data stream.
struct Trainer {
  ModelConfig model;
  TrainConfig train;        // total_steps is always resolved (> 0)
  Parameters<float> params;
  OptimizerState opt;
  std::uint64_t epoch = 0;  // epoch in progress
  std::uint64_t group = 0;  // accumulation groups finished within it

  static Trainer fresh(const ModelConfig& model, const TrainConfig& train, Parameters<float> params);
};

struct StepRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;            // mean over the microbatches
  double dropout = 0.0;
  std::size_t tokens = 0;       // supervised target tokens
  double tokens_per_sec = 0.0;
};

/// Averages gradients over exactly update_frequency microbatches and takes
/// one Adam step. Dropout masks are drawn from a stream keyed by
/// (seed, step, microbatch index).
StepRecord accumulate_and_step(Trainer& trainer, std::span<const Batch> microbatches, double dropout);

/// Checkpoint container: magic, JSON header, then little-endian float32
/// parameters followed by the first and second Adam moments. Written to a
/// temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer);

/// Throws IncompatibleCheckpoint when `expected` is given and differs from
/// the stored model config, or when the file is not a checkpoint.
Trainer load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

std::string checkpoint_name(std::uint64_t step);

/// Groups example indices into microbatches of at most max_tokens padded
/// tokens (an example longer than the budget gets its own batch). Examples
/// are bucketed by length; batch order is shuffled per (seed, epoch).
std::vector<std::vector<std::size_t>> make_token_batches(std::span<const PretrainPair> pairs,
                                                         std::size_t max_tokens, std::uint64_t seed,
                                                         std::uint64_t epoch);

struct RunOptions {
  std::filesystem::path out_dir;       // empty: write nothing
  bool deterministic = true;           // tokens_per_sec logged as 0
  const std::atomic<bool>* stop = nullptr;
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  Trainer trainer;
  std::vector<StepRecord> records;
  bool interrupted = false;
  std::optional<std::filesystem::path> last_checkpoint;
};

/// Denoising pretraining. Example i of epoch e is noised with example index
/// e * corpus.size() + i, so every epoch sees fresh corruption.
TrainResult pretrain(std::span<const std::string> corpus, const Vocabulary& vocab, const ModelConfig& mcfg,
                     const TrainConfig& tcfg, const NoiseConfig& ncfg, const RunOptions& run = {},
                     const Parameters<float>* init = nullptr);

struct SummaryPair {
  std::string document;
  std::string summary;
};

/// Supervised document -> summary training. Starts from `init` (typically
/// pretrained weights) or a fresh initialization. Throws EmptyDataset.
TrainResult finetune(std::span<const SummaryPair> pairs, const Vocabulary& vocab, const ModelConfig& mcfg,
                     const TrainConfig& tcfg, const RunOptions& run = {}, const Parameters<float>* init = nullptr);

/// Clips both sides of a pair to max_positions tokens, keeping bos and the
/// terminal eos.
PretrainPair fit_to_positions(PretrainPair pair, std::size_t max_positions);

/// Metrics CSV header and row rendering (shortest round-trip decimals).
std::string metrics_header();
std::string metrics_row(const StepRecord& rec);

}  // namespace bartlab
