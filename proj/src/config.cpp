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

#include "bartlab/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bartlab/error.hpp"

namespace bartlab {
namespace {

using nlohmann::json;

// Reads declared fields of one JSON object and complains about the rest.
class FieldReader {
 public:
  FieldReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) fail(Errc::kInvalidConfig, section_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("not a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::invalid_argument("not an integer");
        if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned() &&
            it->template get<std::int64_t>() < 0) {
          throw std::invalid_argument("must not be negative");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("not a number");
      }
      out = it->template get<T>();
    } catch (const std::exception& e) {
      fail(Errc::kInvalidConfig, section_ + "." + key + ": " + e.what());
    }
  }

  void schedule(const char* key, std::vector<DropoutPhase>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string where = section_ + "." + key;
    if (!it->is_array()) fail(Errc::kInvalidConfig, where + ": expected [[until_epoch, rate], ...]");
    out.clear();
    for (const auto& phase : *it) {
      if (!phase.is_array() || phase.size() != 2 || !phase[0].is_number_unsigned() || !phase[1].is_number()) {
        fail(Errc::kInvalidConfig, where + ": expected [[until_epoch, rate], ...]");
      }
      out.push_back({phase[0].get<std::size_t>(), phase[1].get<double>()});
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(Errc::kInvalidConfig, section_ + "." + key + ": unknown field");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace

nlohmann::ordered_json to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["enc_layers"] = cfg.enc_layers;
  j["dec_layers"] = cfg.dec_layers;
  j["d_model"] = cfg.d_model;
  j["n_heads"] = cfg.n_heads;
  j["d_ffn"] = cfg.d_ffn;
  j["vocab_size"] = cfg.vocab_size;
  j["max_positions"] = cfg.max_positions;
  j["dropout"] = cfg.dropout;
  j["final_layernorm"] = cfg.final_layernorm;
  return j;
}

nlohmann::ordered_json to_json(const NoiseConfig& cfg) {
  nlohmann::ordered_json j;
  j["mask_ratio"] = cfg.mask_ratio;
  j["poisson_lambda"] = cfg.poisson_lambda;
  j["permute_sentences"] = cfg.permute_sentences;
  j["seed"] = cfg.seed;
  return j;
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["peak_lr"] = cfg.peak_lr;
  j["warmup_frac"] = cfg.warmup_frac;
  j["total_steps"] = cfg.total_steps;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["epsilon"] = cfg.epsilon;
  j["update_frequency"] = cfg.update_frequency;
  auto schedule = nlohmann::ordered_json::array();
  for (const auto& p : cfg.dropout_schedule) schedule.push_back({p.until_epoch, p.rate});
  j["dropout_schedule"] = schedule;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["max_tokens"] = cfg.max_tokens;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["weight_decay"] = cfg.weight_decay;
  j["clip_norm"] = cfg.clip_norm;
  return j;
}

nlohmann::ordered_json to_json(const BeamConfig& cfg) {
  nlohmann::ordered_json j;
  j["beam_size"] = cfg.beam_size;
  j["max_length"] = cfg.max_length;
  j["length_penalty"] = cfg.length_penalty;
  j["min_length"] = cfg.min_length;
  return j;
}

nlohmann::ordered_json to_json(const textnorm::NormRules& rules) {
  nlohmann::ordered_json j;
  j["remove_tatweel"] = rules.remove_tatweel;
  j["remove_diacritics"] = rules.remove_diacritics;
  j["normalize_alef"] = rules.normalize_alef;
  j["normalize_yaa"] = rules.normalize_yaa;
  j["separate_punct"] = rules.separate_punct;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig cfg) {
  FieldReader r(j, "model");
  r.read("enc_layers", cfg.enc_layers);
  r.read("dec_layers", cfg.dec_layers);
  r.read("d_model", cfg.d_model);
  r.read("n_heads", cfg.n_heads);
  r.read("d_ffn", cfg.d_ffn);
  r.read("vocab_size", cfg.vocab_size);
  r.read("max_positions", cfg.max_positions);
  r.read("dropout", cfg.dropout);
  r.read("final_layernorm", cfg.final_layernorm);
  r.finish();
  cfg.validate();
  return cfg;
}

NoiseConfig noise_config_from_json(const nlohmann::json& j, NoiseConfig cfg) {
  FieldReader r(j, "noise");
  r.read("mask_ratio", cfg.mask_ratio);
  r.read("poisson_lambda", cfg.poisson_lambda);
  r.read("permute_sentences", cfg.permute_sentences);
  r.read("seed", cfg.seed);
  r.finish();
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
  FieldReader r(j, "train");
  r.read("peak_lr", cfg.peak_lr);
  r.read("warmup_frac", cfg.warmup_frac);
  r.read("total_steps", cfg.total_steps);
  r.read("beta1", cfg.beta1);
  r.read("beta2", cfg.beta2);
  r.read("epsilon", cfg.epsilon);
  r.read("update_frequency", cfg.update_frequency);
  r.schedule("dropout_schedule", cfg.dropout_schedule);
  r.read("epochs", cfg.epochs);
  r.read("seed", cfg.seed);
  r.read("max_tokens", cfg.max_tokens);
  r.read("checkpoint_every", cfg.checkpoint_every);
  r.read("weight_decay", cfg.weight_decay);
  r.read("clip_norm", cfg.clip_norm);
  r.finish();
  cfg.validate();
  return cfg;
}

BeamConfig beam_config_from_json(const nlohmann::json& j, BeamConfig cfg) {
  FieldReader r(j, "beam");
  r.read("beam_size", cfg.beam_size);
  r.read("max_length", cfg.max_length);
  r.read("length_penalty", cfg.length_penalty);
  r.read("min_length", cfg.min_length);
  r.finish();
  cfg.validate();
  return cfg;
}

textnorm::NormRules norm_rules_from_json(const nlohmann::json& j, textnorm::NormRules rules) {
  FieldReader r(j, "norm");
  r.read("remove_tatweel", rules.remove_tatweel);
  r.read("remove_diacritics", rules.remove_diacritics);
  r.read("normalize_alef", rules.normalize_alef);
  r.read("normalize_yaa", rules.normalize_yaa);
  r.read("separate_punct", rules.separate_punct);
  r.finish();
  return rules;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kFileNotFound, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    fail(Errc::kInvalidConfig, path.string() + ": " + e.what());
  }
}

std::string config_hash(const nlohmann::json& j) {
  // nlohmann::json (unlike ordered_json) stores object keys sorted, so a
  // round trip through it canonicalizes the key order at every level.
  const std::string canonical = json(j).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bartlab
