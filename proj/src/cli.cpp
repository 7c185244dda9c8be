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

#include "bartlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bartlab/config.hpp"
#include "bartlab/data.hpp"
#include "bartlab/decode.hpp"
#include "bartlab/metrics.hpp"
#include "bartlab/noising.hpp"
#include "bartlab/optim.hpp"
#include "bartlab/rng.hpp"
#include "bartlab/textnorm.hpp"
#include "bartlab/tokenizer.hpp"

#ifndef BARTLAB_VERSION
#define BARTLAB_VERSION "0.1.0"
#endif

namespace bartlab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const std::set<std::string> kSections = {"model", "train", "noise", "beam", "norm"};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Flags every command accepts, plus the raw --section.key overrides.
struct Common {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string config_path;
  std::string manifest_path;
  std::map<std::string, std::string> overrides;
};

// What ends up in the run manifest.
struct Invocation {
  std::string command;
  std::vector<std::string> args;
  std::string started_at;
  fs::path manifest_path;
  ordered_json config;  // effective config; null for commands without one
  std::vector<std::string> config_paths;
  std::uint64_t seed = 0;
  ordered_json outputs = ordered_json::object();
};

void write_manifest(const Invocation& inv, int code, const std::string& error) {
  ordered_json j;
  j["command"] = inv.command;
  j["args"] = inv.args;
  j["config_paths"] = inv.config_paths;
  j["config"] = inv.config;
  j["config_hash"] = inv.config.is_null() ? json(nullptr) : json(config_hash(json::parse(inv.config.dump())));
  j["seed"] = inv.seed;
  j["started_at"] = inv.started_at;
  j["finished_at"] = utc_now();
  j["version"] = version();
  j["exit_code"] = code;
  if (!error.empty()) j["error"] = error;
  j["outputs"] = inv.outputs;
  if (inv.manifest_path.has_parent_path()) fs::create_directories(inv.manifest_path.parent_path());
  std::ofstream out(inv.manifest_path, std::ios::binary);
  if (!out) fail(Errc::kIoError, "cannot write " + inv.manifest_path.string());
  out << j.dump(2) << '\n';
}

fs::path manifest_or(const Common& c, const fs::path& fallback) {
  return c.manifest_path.empty() ? fallback : fs::path(c.manifest_path);
}

// File config, then --seed, then --section.key flags.
json load_config(const Common& c, Invocation& inv) {
  json j = json::object();
  if (!c.config_path.empty()) {
    j = read_json_file(c.config_path);
    inv.config_paths.push_back(c.config_path);
    if (!j.is_object()) fail(Errc::kInvalidConfig, c.config_path + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!kSections.contains(key)) fail(Errc::kInvalidConfig, key + ": unknown section");
      if (!value.is_object()) fail(Errc::kInvalidConfig, key + ": expected a JSON object");
    }
  }
  if (c.seed) {
    j["train"]["seed"] = *c.seed;
    j["noise"]["seed"] = *c.seed;
  }
  for (const auto& [name, raw] : c.overrides) {
    const auto dot = name.find('.');
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;  // bare words are strings
    }
    j[name.substr(0, dot)][name.substr(dot + 1)] = value;
  }
  return j;
}

json section(const json& j, const char* name) { return j.contains(name) ? j.at(name) : json::object(); }

void add_common(CLI::App* app, Common& c) {
  app->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s; }, "Seed for all random streams (train.seed and noise.seed)");
  app->add_flag("--deterministic", c.deterministic, "Ordered single-worker execution; throughput is logged as 0");
  app->add_option("--manifest", c.manifest_path, "Run manifest path (default: next to the output)");
}

// One flag per key of a config section, named --section.key.
void add_config_flags(CLI::App* app, Common& c, const std::string& name, const ordered_json& defaults) {
  if (app->get_option_no_throw("--config") == nullptr) {
    app->add_option("--config", c.config_path, "JSON config file with model/train/noise/beam/norm sections");
  }
  for (const auto& [key, value] : defaults.items()) {
    const std::string full = name + "." + key;
    std::string flags = "--" + full;
    if (full == "beam.beam_size") flags += ",--beam";
    std::string help = "default " + value.dump();
    if (full == "beam.max_length" && app->get_name() == "generate") {
      help = "default 3x the mean summary length of --data, in tokens";
    }
    app->add_option_function<std::string>(
           flags, [&c, full](const std::string& v) { c.overrides[full] = v; }, help)
        ->group("Config keys");
  }
}

std::vector<std::string> read_corpus(const fs::path& path, bool with_summaries) {
  if (path.extension() != ".jsonl") return data::read_text_lines(path);
  std::vector<std::string> out;
  for (auto& ex : data::load_jsonl(path).examples) {
    out.push_back(std::move(ex.document));
    if (with_summaries) out.push_back(std::move(ex.summary));
  }
  return out;
}

std::vector<data::Example> read_examples(const fs::path& path, bool lenient, std::ostream& err) {
  auto r = data::load_jsonl(path, lenient ? data::LoadMode::kLenient : data::LoadMode::kStrict);
  for (const auto& issue : r.issues) {
    err << "warning: " << path.string() << ":" << issue.line << ": skipped (" << errc_name(issue.code) << ": "
        << issue.message << ")\n";
  }
  return std::move(r.examples);
}

fs::path latest_checkpoint(const fs::path& dir) {
  std::optional<std::pair<std::uint64_t, fs::path>> best;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("ckpt_step", 0) != 0 || entry.path().extension() != ".bin") continue;
      const std::uint64_t step = std::stoull(name.substr(9));
      if (!best || step > best->first) best = {step, entry.path()};
    }
  }
  if (!best) fail(Errc::kFileNotFound, "no checkpoint to resume from in " + dir.string());
  return best->second;
}

struct TrainOpts {
  std::string corpus;
  std::string data;
  std::string vocab;
  std::string out;
  std::string init;
  std::string resume_from;
  bool resume = false;
  bool lenient = false;
  std::size_t log_every = 50;
};

void add_train_opts(CLI::App* app, TrainOpts& o) {
  app->add_option("--vocab", o.vocab, "Vocabulary file")->required();
  app->add_option("--out", o.out, "Output directory for checkpoints, metrics.csv and manifest.json")->required();
  app->add_flag("--resume", o.resume, "Resume from the latest checkpoint in --out");
  app->add_option("--resume-from", o.resume_from, "Resume from this checkpoint");
  app->add_option("--log-every", o.log_every, "Log every N updates to stderr (0: quiet)");
}

RunOptions make_run(const TrainOpts& o, const Common& c, const std::atomic<bool>* stop, std::ostream& err) {
  RunOptions run;
  run.out_dir = o.out;
  run.deterministic = c.deterministic;
  run.stop = stop;
  if (!o.resume_from.empty()) {
    run.resume_from = fs::path(o.resume_from);
  } else if (o.resume) {
    run.resume_from = latest_checkpoint(o.out);
  }
  if (run.resume_from) err << "resuming from " << run.resume_from->string() << "\n";
  if (o.log_every > 0) {
    run.on_step = [&err, every = o.log_every](const StepRecord& r) {
      if (r.step % every != 0) return;
      std::ostringstream line;
      line << "step " << r.step << " epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss << "\n";
      err << line.str() << std::flush;
    };
  }
  return run;
}

int report(const TrainResult& res, Invocation& inv, std::ostream& err) {
  const auto& tr = res.trainer;
  inv.outputs["total_steps"] = tr.train.total_steps;
  inv.outputs["final_step"] = tr.opt.step;
  if (!res.records.empty()) inv.outputs["final_loss"] = res.records.back().loss;
  if (res.last_checkpoint) inv.outputs["checkpoint"] = res.last_checkpoint->string();
  const std::string where = res.last_checkpoint ? res.last_checkpoint->string() : std::string("(none)");
  if (res.interrupted) {
    err << "interrupted at step " << tr.opt.step << "; checkpoint " << where << "\n";
    return kExitInterrupted;
  }
  err << "finished at step " << tr.opt.step << "; checkpoint " << where << "\n";
  return kExitOk;
}

// Model section over `base`; vocab_size follows the vocabulary unless set.
ModelConfig resolve_model(const json& j, const Vocabulary& vocab, const ModelConfig& base, bool vocab_from_base) {
  json mj = section(j, "model");
  if (!vocab_from_base && !mj.contains("vocab_size")) mj["vocab_size"] = vocab.size();
  return model_config_from_json(mj, base);
}

int cmd_pretrain(const TrainOpts& o, const Common& c, Invocation& inv, const std::atomic<bool>* stop,
                 std::ostream& err) {
  inv.manifest_path = manifest_or(c, fs::path(o.out) / "manifest.json");
  const json j = load_config(c, inv);
  const auto vocab = Vocabulary::load(o.vocab);
  const ModelConfig mcfg = resolve_model(j, vocab, {}, false);
  const TrainConfig tcfg = train_config_from_json(section(j, "train"));
  const NoiseConfig ncfg = noise_config_from_json(section(j, "noise"));
  inv.config = {{"model", to_json(mcfg)}, {"train", to_json(tcfg)}, {"noise", to_json(ncfg)}};
  inv.seed = tcfg.seed;
  const auto corpus = read_corpus(o.corpus, false);
  err << "pretraining on " << corpus.size() << " documents, " << count_params(mcfg) << " parameters\n";
  return report(pretrain(corpus, vocab, mcfg, tcfg, ncfg, make_run(o, c, stop, err)), inv, err);
}

int cmd_finetune(const TrainOpts& o, const Common& c, Invocation& inv, const std::atomic<bool>* stop,
                 std::ostream& err) {
  inv.manifest_path = manifest_or(c, fs::path(o.out) / "manifest.json");
  const json j = load_config(c, inv);
  const auto vocab = Vocabulary::load(o.vocab);
  std::optional<Trainer> init;
  if (!o.init.empty()) init = load_checkpoint(o.init);
  const ModelConfig mcfg = resolve_model(j, vocab, init ? init->model : ModelConfig{}, init.has_value());
  if (init) {
    // Only dropout may differ from the pretrained model.
    ModelConfig shape = mcfg;
    shape.dropout = init->model.dropout;
    if (!(shape == init->model)) {
      fail(Errc::kIncompatibleCheckpoint, "model section changes the shape of " + o.init);
    }
    inv.outputs["init"] = o.init;
  }
  const TrainConfig tcfg = train_config_from_json(section(j, "train"), TrainConfig::finetune_defaults());
  inv.config = {{"model", to_json(mcfg)}, {"train", to_json(tcfg)}};
  inv.seed = tcfg.seed;
  std::vector<SummaryPair> pairs;
  for (auto& ex : read_examples(o.data, o.lenient, err)) pairs.push_back({ex.document, ex.summary});
  err << "finetuning on " << pairs.size() << " pairs\n";
  return report(finetune(pairs, vocab, mcfg, tcfg, make_run(o, c, stop, err), init ? &init->params : nullptr), inv,
                err);
}

struct TokOpts {
  std::string corpus;
  std::string out;
  std::size_t vocab_size = 50000;
  double coverage = 0.9999;
  double sample_fraction = 1.0;
};

int cmd_train_tokenizer(const TokOpts& o, const Common& c, Invocation& inv, std::ostream& err) {
  inv.manifest_path = manifest_or(c, o.out + ".manifest.json");
  inv.config = {{"tokenizer",
                 {{"vocab_size", o.vocab_size}, {"coverage", o.coverage}, {"sample_fraction", o.sample_fraction}}}};
  inv.seed = c.seed.value_or(0);
  if (!(o.sample_fraction > 0.0 && o.sample_fraction <= 1.0)) {
    fail(Errc::kInvalidConfig, "--sample-fraction must be in (0, 1]");
  }
  auto corpus = read_corpus(o.corpus, true);
  if (o.sample_fraction < 1.0) {
    // Independent keep/drop per line under the seed.
    SplitMix64 rng(mix_seed(inv.seed, 4));
    std::erase_if(corpus, [&](const std::string&) { return rng.uniform01() >= o.sample_fraction; });
    err << "sampled " << corpus.size() << " lines\n";
  }
  const auto vocab = Vocabulary::train(corpus, o.vocab_size, o.coverage);
  vocab.save(o.out);
  err << "wrote " << vocab.size() << " pieces to " << o.out << "\n";
  return kExitOk;
}

struct GenOpts {
  std::string checkpoint;
  std::string vocab;
  std::string data;
  std::string out;
  bool lenient = false;
};

int cmd_generate(const GenOpts& o, const Common& c, Invocation& inv, std::ostream& err) {
  inv.manifest_path = manifest_or(c, o.out + ".manifest.json");
  json j = load_config(c, inv);
  inv.seed = c.seed.value_or(0);
  inv.outputs["checkpoint"] = o.checkpoint;
  const Trainer model = load_checkpoint(o.checkpoint);
  const auto vocab = Vocabulary::load(o.vocab);
  if (vocab.size() > model.model.vocab_size) {
    fail(Errc::kIncompatibleCheckpoint, "vocabulary is larger than the checkpoint's model.vocab_size");
  }
  const auto examples = read_examples(o.data, o.lenient, err);
  if (!section(j, "beam").contains("max_length") && !examples.empty()) {
    // Unset: three times the mean summary length of the data in tokens, eos included.
    double total = 0.0;
    for (const auto& ex : examples) total += static_cast<double>(vocab.encode(ex.summary, SeqKind::kTarget).ids.size() - 1);
    j["beam"]["max_length"] = static_cast<std::size_t>(std::ceil(3.0 * total / static_cast<double>(examples.size())));
  }
  const BeamConfig beam = beam_config_from_json(section(j, "beam"));
  inv.config = {{"beam", to_json(beam)}};
  std::ofstream out(o.out, std::ios::binary);
  if (!out) fail(Errc::kIoError, "cannot write " + o.out);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    PretrainPair clipped = fit_to_positions({vocab.encode(examples[i].document, SeqKind::kSource), {}},
                                            model.model.max_positions);
    const std::vector<TokenSequence> src = {std::move(clipped.source)};
    const Hypothesis h = generate<float>(model.params, model.model, src, beam).front();
    ordered_json line;
    line["id"] = examples[i].id;
    line["hypothesis"] = vocab.decode(h.tokens.ids);
    line["score"] = h.score;
    out << line.dump() << '\n';
    if ((i + 1) % 100 == 0) err << "generated " << (i + 1) << "/" << examples.size() << "\n";
  }
  if (!out) fail(Errc::kIoError, "write failed: " + o.out);
  inv.outputs["examples"] = examples.size();
  return kExitOk;
}

// id -> text from a generation file ("hypothesis") or an example file
// ("summary").
std::vector<std::pair<std::string, std::string>> read_hypotheses(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kFileNotFound, path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(n) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(Errc::kMalformedLine, where + e.what());
    }
    if (!obj.is_object()) fail(Errc::kMalformedLine, where + "not a JSON object");
    if (!obj.contains("id") || !obj["id"].is_string()) fail(Errc::kMissingField, where + "id");
    const char* field = obj.contains("hypothesis") ? "hypothesis" : "summary";
    if (!obj.contains(field) || !obj[field].is_string()) fail(Errc::kMissingField, where + "hypothesis");
    const std::string id = obj["id"].get<std::string>();
    if (!seen.insert(id).second) fail(Errc::kMalformedLine, where + "duplicate id " + id);
    out.emplace_back(id, obj[field].get<std::string>());
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::kIoError, "cannot write " + path);
  out << text;
}

struct EvalOpts {
  std::vector<std::string> hyps;
  std::vector<std::string> refs;
  std::vector<std::string> datasets;
  std::vector<std::string> models;
  std::string out_csv;
  std::string out_json;
};

// Per-run label: explicit, or the file stem.
std::string label(const std::vector<std::string>& given, std::size_t i, const std::string& path) {
  return given.empty() ? fs::path(path).stem().string() : given[i];
}

int cmd_evaluate(const EvalOpts& o, const Common& c, Invocation& inv, std::ostream& out) {
  const std::string primary = !o.out_csv.empty() ? o.out_csv : o.out_json;
  if (!primary.empty() || !c.manifest_path.empty()) inv.manifest_path = manifest_or(c, primary + ".manifest.json");
  const json j = load_config(c, inv);
  const auto rules = norm_rules_from_json(section(j, "norm"));
  inv.config = {{"norm", to_json(rules)}};
  inv.seed = c.seed.value_or(0);
  if (o.hyps.size() != o.refs.size()) fail(Errc::kInvalidConfig, "--hyps and --refs must be given the same number of times");
  if ((!o.datasets.empty() && o.datasets.size() != o.hyps.size()) ||
      (!o.models.empty() && o.models.size() != o.hyps.size())) {
    fail(Errc::kInvalidConfig, "--dataset and --model must be omitted or given once per --hyps");
  }
  std::vector<metrics::RunRow> rows;
  for (std::size_t r = 0; r < o.hyps.size(); ++r) {
    const auto refs = data::load_jsonl(o.refs[r]).examples;
    const auto hyps = read_hypotheses(o.hyps[r]);
    if (hyps.size() != refs.size()) {
      fail(Errc::kLengthMismatch, o.hyps[r] + " has " + std::to_string(hyps.size()) + " hypotheses for " +
                                      std::to_string(refs.size()) + " references");
    }
    std::map<std::string, std::string> by_id(hyps.begin(), hyps.end());
    std::vector<std::string> hyp_text;
    std::vector<std::string> ref_text;
    for (const auto& ex : refs) {
      const auto it = by_id.find(ex.id);
      if (it == by_id.end()) fail(Errc::kMissingField, o.hyps[r] + ": no hypothesis for id " + ex.id);
      hyp_text.push_back(it->second);
      ref_text.push_back(ex.summary);
    }
    rows.push_back({label(o.datasets, r, o.refs[r]), label(o.models, r, o.hyps[r]),
                    metrics::evaluate_run(hyp_text, ref_text, rules).mean});
  }
  const std::string csv = metrics::render_rouge_csv(rows);
  out << csv;
  write_text(o.out_csv, csv);
  write_text(o.out_json, metrics::render_rouge_json(rows));
  return kExitOk;
}

struct StatsOpts {
  std::vector<std::string> data;
  std::vector<std::string> names;
  std::string out_csv;
  std::string out_json;
  bool lenient = false;
};

int cmd_stats(const StatsOpts& o, const Common& c, Invocation& inv, std::ostream& out, std::ostream& err) {
  const std::string primary = !o.out_csv.empty() ? o.out_csv : o.out_json;
  if (!primary.empty() || !c.manifest_path.empty()) inv.manifest_path = manifest_or(c, primary + ".manifest.json");
  const json j = load_config(c, inv);
  const auto rules = norm_rules_from_json(section(j, "norm"));
  inv.config = {{"norm", to_json(rules)}};
  inv.seed = c.seed.value_or(0);
  if (!o.names.empty() && o.names.size() != o.data.size()) {
    fail(Errc::kInvalidConfig, "--name must be omitted or given once per --data");
  }
  std::vector<metrics::NamedStats> cols;
  for (std::size_t d = 0; d < o.data.size(); ++d) {
    std::vector<metrics::DocSummary> pairs;
    for (auto& ex : read_examples(o.data[d], o.lenient, err)) pairs.push_back({ex.document, ex.summary});
    cols.push_back({label(o.names, d, o.data[d]), metrics::corpus_stats(pairs, rules)});
  }
  const std::string table = metrics::render_stats_table(cols);
  out << table;
  write_text(o.out_csv, table);
  write_text(o.out_json, metrics::render_stats_json(cols));
  return kExitOk;
}

struct NormOpts {
  std::string in = "-";
  std::string out = "-";
};

int cmd_normalize(const NormOpts& o, const Common& c, Invocation& inv, std::ostream& out) {
  if (o.out != "-" || !c.manifest_path.empty()) inv.manifest_path = manifest_or(c, o.out + ".manifest.json");
  const json j = load_config(c, inv);
  const auto rules = norm_rules_from_json(section(j, "norm"));
  inv.config = {{"norm", to_json(rules)}};
  inv.seed = c.seed.value_or(0);
  std::ifstream file_in;
  if (o.in != "-") {
    file_in.open(o.in, std::ios::binary);
    if (!file_in) fail(Errc::kFileNotFound, o.in);
  }
  std::istream& in = o.in == "-" ? std::cin : file_in;
  std::ofstream file_out;
  if (o.out != "-") {
    file_out.open(o.out, std::ios::binary);
    if (!file_out) fail(Errc::kIoError, "cannot write " + o.out);
  }
  std::ostream& sink = o.out == "-" ? out : file_out;
  std::string line;
  while (std::getline(in, line)) sink << textnorm::normalize_eval(line, rules) << '\n';
  return kExitOk;
}

struct SplitOpts {
  std::string data;
  std::string out;
  std::size_t train_n = 0;
  std::size_t valid_n = 0;
  std::size_t test_n = 0;
  bool lenient = false;
};

int cmd_split(const SplitOpts& o, const Common& c, Invocation& inv, std::ostream& err) {
  inv.manifest_path = manifest_or(c, fs::path(o.out) / "manifest.json");
  inv.seed = c.seed.value_or(0);
  inv.config = {{"split", {{"train_n", o.train_n}, {"valid_n", o.valid_n}, {"test_n", o.test_n}}}};
  const auto examples = read_examples(o.data, o.lenient, err);
  const auto splits = data::make_splits(examples, {o.train_n, o.valid_n, o.test_n, inv.seed});
  fs::create_directories(o.out);
  const std::pair<const char*, const std::vector<data::Example>*> parts[] = {
      {"train", &splits.train}, {"valid", &splits.valid}, {"test", &splits.test}};
  for (const auto& [name, split] : parts) {
    data::write_jsonl(fs::path(o.out) / (std::string(name) + ".jsonl"), *split);
    data::write_manifest(fs::path(o.out) / (std::string(name) + ".ids"), *split);
  }
  return kExitOk;
}

struct MixOpts {
  std::vector<std::string> data;
  std::string out;
  std::size_t total = 0;
  bool lenient = false;
};

int cmd_mix(const MixOpts& o, const Common& c, Invocation& inv, std::ostream& err) {
  inv.manifest_path = manifest_or(c, o.out + ".manifest.json");
  inv.seed = c.seed.value_or(0);
  inv.config = {{"mix", {{"total", o.total}}}};
  std::vector<std::vector<data::Example>> sets;
  for (const auto& path : o.data) sets.push_back(read_examples(path, o.lenient, err));
  const auto mix = data::make_mix(sets, o.total, inv.seed);
  data::write_jsonl(o.out, mix);
  return kExitOk;
}

struct SelectOpts {
  std::string dir;
  std::string valid;
  std::string vocab;
  std::size_t batch_size = 32;
  bool lenient = false;
};

// Token-weighted mean cross-entropy of a checkpoint on a validation set.
double validation_loss(const Trainer& model, const std::vector<PretrainPair>& pairs, std::size_t batch_size) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    std::vector<TokenSequence> src;
    std::vector<TokenSequence> tgt;
    for (std::size_t i = start; i < std::min(pairs.size(), start + batch_size); ++i) {
      src.push_back(pairs[i].source);
      tgt.push_back(pairs[i].target);
    }
    const Batch batch = make_batch(src, tgt);
    const std::size_t n = batch.supervised_tokens();
    total += loss(forward(model.params, model.model, batch), batch.targets, special::kPad) * static_cast<double>(n);
    tokens += n;
  }
  return total / static_cast<double>(tokens);
}

int cmd_select_checkpoint(const SelectOpts& o, const Common& c, Invocation& inv, std::ostream& out,
                          std::ostream& err) {
  inv.manifest_path = manifest_or(c, fs::path(o.dir) / "selection.json");
  inv.seed = c.seed.value_or(0);
  inv.config = {{"select", {{"criterion", "validation_loss"}, {"batch_size", o.batch_size}}}};
  const auto vocab = Vocabulary::load(o.vocab);
  const auto examples = read_examples(o.valid, o.lenient, err);
  if (examples.empty()) fail(Errc::kEmptyDataset, o.valid + " has no examples");
  std::vector<std::pair<std::uint64_t, fs::path>> ckpts;
  if (fs::is_directory(o.dir)) {
    for (const auto& entry : fs::directory_iterator(o.dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("ckpt_step", 0) == 0 && entry.path().extension() == ".bin") {
        ckpts.emplace_back(std::stoull(name.substr(9)), entry.path());
      }
    }
  }
  if (ckpts.empty()) fail(Errc::kFileNotFound, "no checkpoints in " + o.dir);
  std::sort(ckpts.begin(), ckpts.end());
  ordered_json losses = ordered_json::object();
  std::optional<std::pair<double, fs::path>> best;  // strict improvement: earliest wins ties
  for (const auto& [step, path] : ckpts) {
    const Trainer model = load_checkpoint(path);
    std::vector<PretrainPair> pairs;
    for (const auto& ex : examples) {
      pairs.push_back(fit_to_positions(
          {vocab.encode(ex.document, SeqKind::kSource), vocab.encode(ex.summary, SeqKind::kTarget)},
          model.model.max_positions));
    }
    const double l = validation_loss(model, pairs, std::max<std::size_t>(1, o.batch_size));
    losses[path.filename().string()] = l;
    err << path.filename().string() << " validation loss " << l << "\n";
    if (!best || l < best->first) best = {l, path};
  }
  inv.outputs["validation_loss"] = losses;
  inv.outputs["best"] = best->second.string();
  out << best->second.string() << '\n';
  return kExitOk;
}

struct NoiseOpts {
  std::string corpus;
  std::string vocab;
  std::string out;
};

int cmd_noise(const NoiseOpts& o, const Common& c, Invocation& inv) {
  inv.manifest_path = manifest_or(c, o.out + ".manifest.json");
  const json j = load_config(c, inv);
  const NoiseConfig ncfg = noise_config_from_json(section(j, "noise"));
  inv.config = {{"noise", to_json(ncfg)}};
  inv.seed = ncfg.seed;
  const auto vocab = Vocabulary::load(o.vocab);
  const auto corpus = read_corpus(o.corpus, false);
  std::ofstream out(o.out, std::ios::binary);
  if (!out) fail(Errc::kIoError, "cannot write " + o.out);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out << pair_to_jsonl(make_pretrain_pair(corpus[i], vocab, ncfg, i), i) << '\n';
  }
  return kExitOk;
}

}  // namespace

std::string version() { return BARTLAB_VERSION; }

int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::kConfig: return kExitConfig;
    case ErrorCategory::kData: return kExitData;
    case ErrorCategory::kNumerical: return kExitNumerical;
  }
  return kExitInternal;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const std::atomic<bool>* stop) {
  CLI::App app{"Denoising sequence-to-sequence pretraining, finetuning and summary evaluation.", "bartlab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  Common c;
  std::map<std::string, std::function<int(Invocation&)>> handlers;

  TokOpts tok;
  auto* t = app.add_subcommand("train-tokenizer", "Learn a subword vocabulary");
  add_common(t, c);
  t->add_option("--corpus", tok.corpus, "Text file (one document per line) or examples .jsonl")->required();
  t->add_option("--vocab-size", tok.vocab_size, "Target vocabulary size, specials included");
  t->add_option("--coverage", tok.coverage, "Character coverage");
  t->add_option("--sample-fraction", tok.sample_fraction, "Train on a seeded random fraction of the lines");
  t->add_option("--out", tok.out, "Vocabulary file to write")->required();
  handlers["train-tokenizer"] = [&](Invocation& inv) { return cmd_train_tokenizer(tok, c, inv, err); };

  TrainOpts pre;
  auto* p = app.add_subcommand("pretrain", "Denoising pretraining");
  add_common(p, c);
  add_train_opts(p, pre);
  p->add_option("--corpus", pre.corpus, "Text file (one document per line) or examples .jsonl")->required();
  add_config_flags(p, c, "model", to_json(ModelConfig{}));
  add_config_flags(p, c, "train", to_json(TrainConfig{}));
  add_config_flags(p, c, "noise", to_json(NoiseConfig{}));
  handlers["pretrain"] = [&](Invocation& inv) { return cmd_pretrain(pre, c, inv, stop, err); };

  TrainOpts fin;
  auto* f = app.add_subcommand("finetune", "Supervised document to summary training");
  add_common(f, c);
  add_train_opts(f, fin);
  f->add_option("--data", fin.data, "Training examples (.jsonl)")->required();
  f->add_option("--init", fin.init, "Checkpoint to start from (usually pretrained)");
  f->add_flag("--lenient", fin.lenient, "Skip malformed lines instead of failing");
  add_config_flags(f, c, "model", to_json(ModelConfig{}));
  add_config_flags(f, c, "train", to_json(TrainConfig::finetune_defaults()));
  handlers["finetune"] = [&](Invocation& inv) { return cmd_finetune(fin, c, inv, stop, err); };

  GenOpts gen;
  auto* g = app.add_subcommand("generate", "Beam-search summaries for a set of documents");
  add_common(g, c);
  g->add_option("--checkpoint", gen.checkpoint, "Model checkpoint")->required();
  g->add_option("--vocab", gen.vocab, "Vocabulary file")->required();
  g->add_option("--data", gen.data, "Examples (.jsonl); only id and document are used")->required();
  g->add_option("--out", gen.out, "Output .jsonl of {id, hypothesis, score}")->required();
  g->add_flag("--lenient", gen.lenient, "Skip malformed lines instead of failing");
  add_config_flags(g, c, "beam", to_json(BeamConfig{}));
  handlers["generate"] = [&](Invocation& inv) { return cmd_generate(gen, c, inv, err); };

  EvalOpts ev;
  auto* e = app.add_subcommand("evaluate", "ROUGE-1/2/L F1 of hypotheses against references");
  add_common(e, c);
  e->add_option("--hyps", ev.hyps, "Generation .jsonl (repeatable, one per run)")->required();
  e->add_option("--refs", ev.refs, "Reference examples .jsonl (one per --hyps)")->required();
  e->add_option("--dataset", ev.datasets, "Dataset label per run (default: --refs file stem)");
  e->add_option("--model", ev.models, "Model label per run (default: --hyps file stem)");
  e->add_option("--out-csv", ev.out_csv, "Write the score table as CSV");
  e->add_option("--out-json", ev.out_json, "Write the scores as JSON");
  add_config_flags(e, c, "norm", to_json(textnorm::NormRules{}));
  handlers["evaluate"] = [&](Invocation& inv) { return cmd_evaluate(ev, c, inv, out); };

  StatsOpts st;
  auto* s = app.add_subcommand("stats", "Length and abstractiveness statistics of datasets");
  add_common(s, c);
  s->add_option("--data", st.data, "Examples .jsonl (repeatable)")->required();
  s->add_option("--name", st.names, "Column name per --data (default: file stem)");
  s->add_option("--out-csv", st.out_csv, "Write the table as CSV");
  s->add_option("--out-json", st.out_json, "Write the statistics as JSON");
  s->add_flag("--lenient", st.lenient, "Skip malformed lines instead of failing");
  add_config_flags(s, c, "norm", to_json(textnorm::NormRules{}));
  handlers["stats"] = [&](Invocation& inv) { return cmd_stats(st, c, inv, out, err); };

  NormOpts nm;
  auto* n = app.add_subcommand("normalize", "Evaluation normalization, line by line");
  add_common(n, c);
  n->add_option("--in", nm.in, "Input file (- for stdin)");
  n->add_option("--out", nm.out, "Output file (- for stdout)");
  add_config_flags(n, c, "norm", to_json(textnorm::NormRules{}));
  handlers["normalize"] = [&](Invocation& inv) { return cmd_normalize(nm, c, inv, out); };

  SplitOpts sp;
  auto* x = app.add_subcommand("split", "Random train/valid/test splits with id manifests");
  add_common(x, c);
  x->add_option("--data", sp.data, "Examples .jsonl")->required();
  x->add_option("--train-n", sp.train_n, "Training examples")->required();
  x->add_option("--valid-n", sp.valid_n, "Validation examples");
  x->add_option("--test-n", sp.test_n, "Test examples");
  x->add_option("--out", sp.out, "Output directory")->required();
  x->add_flag("--lenient", sp.lenient, "Skip malformed lines instead of failing");
  handlers["split"] = [&](Invocation& inv) { return cmd_split(sp, c, inv, err); };

  MixOpts mx;
  auto* m = app.add_subcommand("mix", "Uniform sample from the union of several datasets");
  add_common(m, c);
  m->add_option("--data", mx.data, "Examples .jsonl (repeatable)")->required();
  m->add_option("--total", mx.total, "Examples to draw")->required();
  m->add_option("--out", mx.out, "Output .jsonl")->required();
  m->add_flag("--lenient", mx.lenient, "Skip malformed lines instead of failing");
  handlers["mix"] = [&](Invocation& inv) { return cmd_mix(mx, c, inv, err); };

  SelectOpts sel;
  auto* b = app.add_subcommand("select-checkpoint", "Pick the checkpoint with the lowest validation loss");
  add_common(b, c);
  b->add_option("--dir", sel.dir, "Training output directory holding ckpt_step*.bin")->required();
  b->add_option("--valid", sel.valid, "Validation examples (.jsonl)")->required();
  b->add_option("--vocab", sel.vocab, "Vocabulary file")->required();
  b->add_option("--batch-size", sel.batch_size, "Examples per forward pass");
  b->add_flag("--lenient", sel.lenient, "Skip malformed lines instead of failing");
  handlers["select-checkpoint"] = [&](Invocation& inv) { return cmd_select_checkpoint(sel, c, inv, out, err); };

  NoiseOpts no;
  auto* z = app.add_subcommand("noise", "Dump the noised pretraining pairs for a corpus");
  add_common(z, c);
  z->add_option("--corpus", no.corpus, "Text file (one document per line) or examples .jsonl")->required();
  z->add_option("--vocab", no.vocab, "Vocabulary file")->required();
  z->add_option("--out", no.out, "Output .jsonl of {src_ids, tgt_ids, example_index}")->required();
  add_config_flags(z, c, "noise", to_json(NoiseConfig{}));
  handlers["noise"] = [&](Invocation& inv) { return cmd_noise(no, c, inv); };

  std::vector<const char*> argv = {"bartlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Invocation inv;
  inv.command = app.get_subcommands().front()->get_name();
  inv.args = args;
  inv.started_at = utc_now();
  int code = kExitOk;
  std::string error;
  try {
    code = handlers.at(inv.command)(inv);
  } catch (const Error& ex) {
    error = ex.what();
    code = exit_code(ex.category());
  } catch (const fs::filesystem_error& ex) {
    error = ex.what();
    code = kExitData;
  } catch (const std::exception& ex) {
    error = std::string("internal error: ") + ex.what();
    code = kExitInternal;
  }
  if (!error.empty()) err << "error: " << error << "\n";
  if (!inv.manifest_path.empty()) {
    try {
      write_manifest(inv, code, error);
    } catch (const std::exception& ex) {
      err << "error: " << ex.what() << "\n";
      if (code == kExitOk) code = kExitData;
    }
  }
  return code;
}

}  // namespace bartlab::cli
