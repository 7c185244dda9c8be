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

#include "bartlab/optim.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "bartlab/config.hpp"
#include "bartlab/error.hpp"
#include "bartlab/rng.hpp"

namespace bartlab {
namespace {

// Stream tags for mix_seed so batching and dropout never share draws.
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kInitStream = 3;

constexpr char kMagic[8] = {'B', 'L', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_floats(std::string& out, const Parameters<float>& params) {
  for (const auto& t : params.tensors) {
    for (float x : t.data) {
      const auto bits = std::bit_cast<std::uint32_t>(x);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
}

std::size_t get_floats(const std::string& bytes, std::size_t pos, Parameters<float>& params) {
  for (auto& t : params.tensors) {
    if (bytes.size() - pos < 4 * t.data.size()) fail(Errc::kIncompatibleCheckpoint, "checkpoint is truncated");
    for (float& x : t.data) {
      std::uint32_t bits = 0;
      for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(bytes[pos + i]);
      x = std::bit_cast<float>(bits);
      pos += 4;
    }
  }
  return pos;
}

std::string shortest(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <typename Fn>
void for_each_coordinate(Parameters<float>& params, Fn fn) {
  for (auto& t : params.tensors) {
    for (float& x : t.data) fn(x);
  }
}

using EpochData = std::function<std::vector<PretrainPair>(std::uint64_t)>;

// Rewrites metrics.csv keeping rows up to `step`, so a resumed run appends
// exactly where the checkpoint left off.
void prepare_metrics(const std::filesystem::path& path, std::uint64_t keep_through) {
  std::vector<std::string> kept;
  if (keep_through > 0) {
    std::ifstream in(path);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        header = false;
        continue;
      }
      if (std::stoull(line.substr(0, line.find(','))) <= keep_through) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::kIoError, "cannot write " + path.string());
  out << metrics_header() << '\n';
  for (const auto& line : kept) out << line << '\n';
}

std::size_t groups_in(const std::vector<std::vector<std::size_t>>& batches, const TrainConfig& cfg) {
  return batches.size() / cfg.update_frequency;
}

TrainResult run_training(const EpochData& data, const ModelConfig& mcfg, TrainConfig tcfg, const RunOptions& run,
                         const Parameters<float>* init) {
  mcfg.validate();
  tcfg.validate();
  if (tcfg.total_steps == 0) {
    for (std::uint64_t e = 0; e < tcfg.epochs; ++e) {
      const auto pairs = data(e);
      tcfg.total_steps += groups_in(make_token_batches(pairs, tcfg.max_tokens, tcfg.seed, e), tcfg);
    }
    if (tcfg.total_steps == 0) {
      fail(Errc::kInvalidConfig, "no epoch yields a full group of update_frequency microbatches");
    }
  } else if (groups_in(make_token_batches(data(0), tcfg.max_tokens, tcfg.seed, 0), tcfg) == 0) {
    fail(Errc::kInvalidConfig, "an epoch yields fewer than update_frequency microbatches; lower train.max_tokens or "
                               "train.update_frequency");
  }

  TrainResult result;
  Trainer& tr = result.trainer;
  if (run.resume_from) {
    tr = load_checkpoint(*run.resume_from, &mcfg);
    if (!(tr.train == tcfg)) fail(Errc::kIncompatibleCheckpoint, "training config differs from the checkpoint's");
  } else {
    tr = Trainer::fresh(mcfg, tcfg,
                        init ? *init : init_params<float>(mcfg, mix_seed(tcfg.seed, kInitStream)));
  }
  if (tr.params.layout.names != ParamLayout::build(mcfg).names) {
    fail(Errc::kIncompatibleCheckpoint, "initial parameters do not match the model config");
  }

  const bool writing = !run.out_dir.empty();
  const auto metrics_path = run.out_dir / "metrics.csv";
  std::ofstream metrics;
  if (writing) {
    std::filesystem::create_directories(run.out_dir);
    prepare_metrics(metrics_path, tr.opt.step);
    metrics.open(metrics_path, std::ios::app);
  }
  auto checkpoint = [&] {
    if (!writing) return;
    const auto path = run.out_dir / checkpoint_name(tr.opt.step);
    save_checkpoint(path, tr);
    result.last_checkpoint = path;
  };

  std::uint64_t saved_at = run.resume_from ? tr.opt.step : UINT64_MAX;
  for (std::uint64_t e = tr.epoch; e < tcfg.epochs && tr.opt.step < tcfg.total_steps; ++e) {
    const auto pairs = data(e);
    const auto batches = make_token_batches(pairs, tcfg.max_tokens, tcfg.seed, e);
    const double dropout = tcfg.dropout_for_epoch(e).value_or(mcfg.dropout);
    const std::size_t groups = groups_in(batches, tcfg);
    for (std::uint64_t g = tr.group; g < groups && tr.opt.step < tcfg.total_steps; ++g) {
      std::vector<Batch> micro;
      for (std::size_t k = 0; k < tcfg.update_frequency; ++k) {
        std::vector<TokenSequence> src;
        std::vector<TokenSequence> tgt;
        for (std::size_t idx : batches[g * tcfg.update_frequency + k]) {
          src.push_back(pairs[idx].source);
          tgt.push_back(pairs[idx].target);
        }
        micro.push_back(make_batch(src, tgt));
      }
      const auto t0 = std::chrono::steady_clock::now();
      StepRecord rec = accumulate_and_step(tr, micro, dropout);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.epoch = e;
      rec.tokens_per_sec = run.deterministic || secs <= 0.0 ? 0.0 : static_cast<double>(rec.tokens) / secs;
      tr.epoch = e;
      tr.group = g + 1;
      result.records.push_back(rec);
      if (writing) metrics << metrics_row(rec) << '\n' << std::flush;
      if (run.on_step) run.on_step(rec);
      if (tcfg.checkpoint_every > 0 && tr.opt.step % tcfg.checkpoint_every == 0) {
        checkpoint();
        saved_at = tr.opt.step;
      }
      if (run.stop && run.stop->load()) {
        if (saved_at != tr.opt.step) checkpoint();
        result.interrupted = true;
        return result;
      }
    }
    tr.epoch = e + 1;
    tr.group = 0;
  }
  if (saved_at != tr.opt.step || !result.last_checkpoint) checkpoint();
  return result;
}

}  // namespace

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig cfg;
  cfg.peak_lr = 5e-5;
  cfg.warmup_frac = 0.0;
  cfg.update_frequency = 1;
  cfg.dropout_schedule.clear();
  cfg.epochs = 3;
  return cfg;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { fail(Errc::kInvalidConfig, "train." + what); };
  if (!(peak_lr > 0.0 && std::isfinite(peak_lr))) bad("peak_lr must be positive");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) bad("warmup_frac must lie in [0, 1)");
  if (!(beta1 > 0.0 && beta1 < 1.0)) bad("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) bad("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) bad("epsilon must be positive");
  if (update_frequency < 1) bad("update_frequency must be at least 1");
  if (epochs < 1) bad("epochs must be at least 1");
  if (max_tokens < 1) bad("max_tokens must be at least 1");
  if (!(weight_decay >= 0.0)) bad("weight_decay must not be negative");
  if (!(clip_norm >= 0.0)) bad("clip_norm must not be negative");
  std::size_t prev = 0;
  for (const auto& phase : dropout_schedule) {
    if (phase.until_epoch <= prev) bad("dropout_schedule epochs must be strictly increasing and positive");
    if (!(phase.rate >= 0.0 && phase.rate < 1.0)) bad("dropout_schedule rates must lie in [0, 1)");
    prev = phase.until_epoch;
  }
}

std::optional<double> TrainConfig::dropout_for_epoch(std::size_t epoch) const {
  if (dropout_schedule.empty()) return std::nullopt;
  for (const auto& phase : dropout_schedule) {
    if (epoch < phase.until_epoch) return phase.rate;
  }
  return dropout_schedule.back().rate;
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  const std::size_t total = cfg.total_steps;
  if (total == 0 || step > total) {
    fail(Errc::kStepOutOfRange, "step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  // Capped below total so the schedule always ends at 0.
  const auto warmup = std::min(
      static_cast<std::size_t>(std::llround(cfg.warmup_frac * static_cast<double>(total))), total - 1);
  if (warmup > 0 && step <= warmup) {
    return cfg.peak_lr * (static_cast<double>(step) / static_cast<double>(warmup));
  }
  return cfg.peak_lr * (static_cast<double>(total - step) / static_cast<double>(total - warmup));
}

OptimizerState OptimizerState::zeros_like(const Parameters<float>& params) {
  return {Parameters<float>::zeros_like(params), Parameters<float>::zeros_like(params), 0};
}

void adam_step(Parameters<float>& params, const Parameters<float>& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg) {
  for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
    for (float g : grads.tensors[t].data) {
      if (!std::isfinite(g)) fail(Errc::kNonFiniteGradient, "non-finite gradient in " + params.layout.names[t]);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& p = params.tensors[k].data;
    auto& m = state.m.tensors[k].data;
    auto& v = state.v.tensors[k].data;
    const auto& g = grads.tensors[k].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      if (cfg.weight_decay > 0.0) gi += cfg.weight_decay * p[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p[i] = static_cast<float>(p[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon));
    }
  }
}

Trainer Trainer::fresh(const ModelConfig& model, const TrainConfig& train, Parameters<float> params) {
  if (train.total_steps == 0) fail(Errc::kInvalidConfig, "train.total_steps must be resolved before training");
  Trainer tr;
  tr.model = model;
  tr.train = train;
  tr.opt = OptimizerState::zeros_like(params);
  tr.params = std::move(params);
  return tr;
}

StepRecord accumulate_and_step(Trainer& trainer, std::span<const Batch> microbatches, double dropout) {
  const TrainConfig& cfg = trainer.train;
  if (microbatches.size() != cfg.update_frequency) {
    fail(Errc::kInvalidConfig, "expected " + std::to_string(cfg.update_frequency) + " microbatches, got " +
                                   std::to_string(microbatches.size()));
  }
  StepRecord rec;
  rec.step = trainer.opt.step + 1;
  rec.dropout = dropout;
  rec.lr = lr_at(rec.step, cfg);

  auto sum = Parameters<float>::zeros_like(trainer.params);
  const std::uint64_t step_seed = mix_seed(mix_seed(cfg.seed, kDropoutStream), rec.step);
  for (std::size_t i = 0; i < microbatches.size(); ++i) {
    SplitMix64 rng(mix_seed(step_seed, i));
    const ForwardOptions opts{true, dropout, &rng};
    auto lg = backward(trainer.params, trainer.model, microbatches[i], opts);
    if (!std::isfinite(lg.loss)) fail(Errc::kNonFiniteLoss, "loss is " + shortest(lg.loss) + " at step " + std::to_string(rec.step));
    for (std::size_t t = 0; t < sum.tensors.size(); ++t) {
      auto& dst = sum.tensors[t].data;
      const auto& src = lg.grads.tensors[t].data;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    rec.loss += lg.loss;
    rec.tokens += lg.tokens;
  }
  const auto k = static_cast<double>(microbatches.size());
  rec.loss /= k;
  if (microbatches.size() > 1) {
    const float inv = static_cast<float>(1.0 / k);
    for_each_coordinate(sum, [inv](float& x) { x *= inv; });
  }
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for_each_coordinate(sum, [&sq](float& x) { sq += static_cast<double>(x) * x; });
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) {
      const float scale = static_cast<float>(cfg.clip_norm / norm);
      for_each_coordinate(sum, [scale](float& x) { x *= scale; });
    }
  }
  adam_step(trainer.params, sum, trainer.opt, rec.lr, cfg);
  return rec;
}

std::string checkpoint_name(std::uint64_t step) { return "ckpt_step" + std::to_string(step) + ".bin"; }

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer) {
  nlohmann::ordered_json header;
  header["model"] = to_json(trainer.model);
  header["train"] = to_json(trainer.train);
  header["step"] = trainer.opt.step;
  header["epoch"] = trainer.epoch;
  header["group"] = trainer.group;
  auto tensors = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < trainer.params.tensors.size(); ++t) {
    tensors.push_back({{"name", trainer.params.layout.names[t]}, {"shape", trainer.params.tensors[t].shape}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_u64(bytes, text.size());
  bytes += text;
  put_floats(bytes, trainer.params);
  put_floats(bytes, trainer.opt.m);
  put_floats(bytes, trainer.opt.v);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::kIoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::kIoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Trainer load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kFileNotFound, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(Errc::kIncompatibleCheckpoint, path.string() + " is not a checkpoint");
  }
  const std::uint64_t header_len = get_u64(raw + 8);
  if (bytes.size() - 16 < header_len) fail(Errc::kIncompatibleCheckpoint, "checkpoint is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kIncompatibleCheckpoint, std::string("bad checkpoint header: ") + e.what());
  }

  Trainer tr;
  try {
    tr.model = model_config_from_json(header.at("model"));
    tr.train = train_config_from_json(header.at("train"));
    tr.opt.step = header.at("step").get<std::uint64_t>();
    tr.epoch = header.at("epoch").get<std::uint64_t>();
    tr.group = header.at("group").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kIncompatibleCheckpoint, std::string("bad checkpoint header: ") + e.what());
  }
  if (expected && !(*expected == tr.model)) {
    fail(Errc::kIncompatibleCheckpoint, "checkpoint model config " + to_json(tr.model).dump() +
                                            " differs from " + to_json(*expected).dump());
  }

  tr.params = init_params<float>(tr.model, 0);
  const auto& listed = header.at("tensors");
  if (listed.size() != tr.params.tensors.size()) fail(Errc::kIncompatibleCheckpoint, "tensor count mismatch");
  for (std::size_t t = 0; t < listed.size(); ++t) {
    if (listed[t].at("name").get<std::string>() != tr.params.layout.names[t] ||
        listed[t].at("shape").get<nn::Shape>() != tr.params.tensors[t].shape) {
      fail(Errc::kIncompatibleCheckpoint, "tensor " + tr.params.layout.names[t] + " does not match");
    }
  }
  tr.opt.m = Parameters<float>::zeros_like(tr.params);
  tr.opt.v = Parameters<float>::zeros_like(tr.params);
  std::size_t pos = 16 + header_len;
  pos = get_floats(bytes, pos, tr.params);
  pos = get_floats(bytes, pos, tr.opt.m);
  pos = get_floats(bytes, pos, tr.opt.v);
  if (pos != bytes.size()) fail(Errc::kIncompatibleCheckpoint, "trailing bytes in checkpoint");
  return tr;
}

std::vector<std::vector<std::size_t>> make_token_batches(std::span<const PretrainPair> pairs,
                                                         std::size_t max_tokens, std::uint64_t seed,
                                                         std::uint64_t epoch) {
  std::vector<std::size_t> len(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    len[i] = std::max(pairs[i].source.ids.size(), pairs[i].target.ids.size());
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return len[a] < len[b]; });

  std::vector<std::vector<std::size_t>> batches;
  std::size_t widest = 0;
  for (std::size_t idx : order) {
    const std::size_t w = std::max(widest, len[idx]);
    if (batches.empty() || (batches.back().size() + 1) * w > max_tokens) {
      batches.emplace_back();
      widest = len[idx];
    } else {
      widest = w;
    }
    batches.back().push_back(idx);
  }
  SplitMix64 rng(mix_seed(mix_seed(seed, kBatchStream), epoch));
  rng.shuffle(batches);
  return batches;
}

PretrainPair fit_to_positions(PretrainPair pair, std::size_t max_positions) {
  auto clip = [max_positions](TokenSequence& seq) {
    if (seq.ids.size() <= max_positions) return;
    seq.ids.resize(max_positions - 1);
    seq.ids.push_back(special::kEos);
  };
  clip(pair.source);
  clip(pair.target);
  return pair;
}

TrainResult pretrain(std::span<const std::string> corpus, const Vocabulary& vocab, const ModelConfig& mcfg,
                     const TrainConfig& tcfg, const NoiseConfig& ncfg, const RunOptions& run,
                     const Parameters<float>* init) {
  if (corpus.empty()) fail(Errc::kEmptyDataset, "pretraining corpus is empty");
  if (vocab.size() > mcfg.vocab_size) fail(Errc::kInvalidConfig, "model.vocab_size is smaller than the vocabulary");
  ncfg.validate();
  // Clean targets do not depend on the epoch; encode them once.
  std::vector<TokenSequence> targets;
  targets.reserve(corpus.size());
  for (const auto& text : corpus) targets.push_back(vocab.encode(text, SeqKind::kTarget));
  const EpochData data = [&](std::uint64_t epoch) {
    std::vector<PretrainPair> pairs;
    pairs.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      SplitMix64 rng(mix_seed(ncfg.seed, epoch * corpus.size() + i));
      const std::string shuffled = ncfg.permute_sentences ? permute_sentences(corpus[i], rng) : corpus[i];
      PretrainPair pair{text_infill(vocab.encode(shuffled, SeqKind::kSource), ncfg, rng), targets[i]};
      pairs.push_back(fit_to_positions(std::move(pair), mcfg.max_positions));
    }
    return pairs;
  };
  return run_training(data, mcfg, tcfg, run, init);
}

TrainResult finetune(std::span<const SummaryPair> pairs, const Vocabulary& vocab, const ModelConfig& mcfg,
                     const TrainConfig& tcfg, const RunOptions& run, const Parameters<float>* init) {
  if (pairs.empty()) fail(Errc::kEmptyDataset, "finetuning set is empty");
  if (vocab.size() > mcfg.vocab_size) fail(Errc::kInvalidConfig, "model.vocab_size is smaller than the vocabulary");
  std::vector<PretrainPair> encoded;
  encoded.reserve(pairs.size());
  for (const auto& p : pairs) {
    encoded.push_back(fit_to_positions(
        {vocab.encode(p.document, SeqKind::kSource), vocab.encode(p.summary, SeqKind::kTarget)},
        mcfg.max_positions));
  }
  const EpochData data = [&](std::uint64_t) { return encoded; };
  return run_training(data, mcfg, tcfg, run, init);
}

std::string metrics_header() { return "step,epoch,lr,loss,tokens_per_sec"; }

std::string metrics_row(const StepRecord& rec) {
  return std::to_string(rec.step) + "," + std::to_string(rec.epoch) + "," + shortest(rec.lr) + "," +
         shortest(rec.loss) + "," + shortest(rec.tokens_per_sec);
}

}  // namespace bartlab
