// Copyright 2026 The Untwist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "untwist/annotate/box.hpp"
#include "untwist/bench/groundbench.hpp"
#include "untwist/llm/gateway.hpp"

namespace untwist {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AppConfig {
  std::filesystem::path data_dir = "data";
  llm::GatewayConfig gateway;
  double sampling_interval_s = 2.0;
  std::size_t k_min = 1;
  std::optional<std::size_t> k_max;  // unset: derived from duration
  double tau = 0.05;
  std::uint64_t seed = 0;
  int restarts = 4;
  annotate::AnnotationStyle style;
  bool auto_contrast = false;
  std::size_t history_turns = 12;
  bench::GeneratorConfig generator;

  void validate() const;  // throws ConfigError
};

/// Values given on the command line; unset fields fall through.
struct ConfigOverrides {
  std::optional<std::filesystem::path> data_dir;
  std::optional<double> sampling_interval_s;
  std::optional<std::size_t> k_max;
  std::optional<double> tau;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> base_url;
  std::optional<std::string> chat_model;
  std::optional<int> stroke_px;
};

using Environment = std::map<std::string, std::string>;

/// UNTWIST_* variables of the running process.
Environment process_environment();

/// Recognized variables:
///   UNTWIST_API_KEY  UNTWIST_BASE_URL  UNTWIST_CHAT_MODEL  UNTWIST_TRANSCRIPTION_MODEL
///   UNTWIST_DATA_DIR  UNTWIST_INTERVAL_S  UNTWIST_K_MAX  UNTWIST_TAU  UNTWIST_SEED
///   UNTWIST_STROKE_PX
/// The API key is read from the environment only.
///
/// Layering is defaults, then the file, then flags, then the environment.
/// The file is `config_file` when given (it must exist), otherwise
/// <data_dir>/config.json if present.
AppConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                         const ConfigOverrides& flags, const Environment& env);

void apply_file(AppConfig& cfg, const nlohmann::json& doc);
nlohmann::json to_json(const AppConfig& cfg);

}  // namespace untwist
