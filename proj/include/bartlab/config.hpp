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

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "bartlab/decode.hpp"
#include "bartlab/model.hpp"
#include "bartlab/noising.hpp"
#include "bartlab/optim.hpp"
#include "bartlab/textnorm.hpp"

namespace bartlab {

// JSON forms of the three config records. Readers start from the given
// defaults, override only the keys present, reject unknown keys and
// mistyped values with InvalidConfig naming the field, then validate.

nlohmann::ordered_json to_json(const ModelConfig& cfg);
nlohmann::ordered_json to_json(const NoiseConfig& cfg);
nlohmann::ordered_json to_json(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const BeamConfig& cfg);
nlohmann::ordered_json to_json(const textnorm::NormRules& rules);

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
NoiseConfig noise_config_from_json(const nlohmann::json& j, NoiseConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
BeamConfig beam_config_from_json(const nlohmann::json& j, BeamConfig base = {});
textnorm::NormRules norm_rules_from_json(const nlohmann::json& j, textnorm::NormRules base = {});

/// Parses a JSON file; FileNotFound / InvalidConfig on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// 64-bit FNV-1a of the compact dump with keys sorted at every level, as
/// 16 hex digits. Insensitive to key order in the source document.
std::string config_hash(const nlohmann::json& j);

}  // namespace bartlab
