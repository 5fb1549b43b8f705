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


#include "untwist/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

extern char** environ;

namespace untwist {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
T parse_int(const std::string& name, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: not an integer: '{}'", name, text));
  return value;
}

double parse_double(const std::string& name, const std::string& text) {
  std::size_t used = 0;
  double value = 0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(value))
    throw ConfigError(fmt::format("{}: not a number: '{}'", name, text));
  return value;
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!known.count(key)) throw ConfigError(fmt::format("unknown config key '{}{}'", where, key));
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (const auto it = obj.find(key); it != obj.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

void AppConfig::validate() const {
  if (!(sampling_interval_s > 0)) throw ConfigError("sampling_interval_s must be > 0");
  if (k_min < 1) throw ConfigError("k_min must be >= 1");
  if (k_max && *k_max < k_min) throw ConfigError("k_max must be >= k_min");
  if (!(tau > 0 && tau < 1)) throw ConfigError("tau must lie in (0, 1)");
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  if (style.stroke_px < 1) throw ConfigError("stroke_px must be >= 1");
  try {
    gateway.validate();
    generator.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Environment process_environment() {
  Environment env;
  for (char** p = environ; p && *p; ++p) {
    const std::string entry(*p);
    const auto eq = entry.find('=');
    if (eq == std::string::npos || entry.rfind("UNTWIST_", 0) != 0) continue;
    env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

void apply_file(AppConfig& cfg, const json& doc) {
  check_keys(doc, "", {"data_dir", "sampling_interval_s", "keyframe", "annotation", "history_turns",
                       "gateway", "bench"});
  try {
    if (const auto it = doc.find("data_dir"); it != doc.end()) cfg.data_dir = it->get<std::string>();
    maybe(doc, "sampling_interval_s", cfg.sampling_interval_s);
    maybe(doc, "history_turns", cfg.history_turns);
    if (const auto it = doc.find("keyframe"); it != doc.end()) {
      check_keys(*it, "keyframe.", {"k_min", "k_max", "tau", "seed", "restarts"});
      maybe(*it, "k_min", cfg.k_min);
      if (const auto k = it->find("k_max"); k != it->end() && !k->is_null())
        cfg.k_max = k->get<std::size_t>();
      maybe(*it, "tau", cfg.tau);
      maybe(*it, "seed", cfg.seed);
      maybe(*it, "restarts", cfg.restarts);
    }
    if (const auto it = doc.find("annotation"); it != doc.end()) {
      check_keys(*it, "annotation.", {"color", "stroke_px", "auto_contrast"});
      if (const auto c = it->find("color"); c != it->end()) {
        const auto rgb = c->get<std::array<int, 3>>();
        for (int v : rgb)
          if (v < 0 || v > 255) throw ConfigError("annotation.color components must be 0..255");
        cfg.style.color = {static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                           static_cast<std::uint8_t>(rgb[2])};
      }
      maybe(*it, "stroke_px", cfg.style.stroke_px);
      maybe(*it, "auto_contrast", cfg.auto_contrast);
    }
    if (const auto it = doc.find("gateway"); it != doc.end()) {
      if (it->is_object() && it->contains("api_key"))
        throw ConfigError("gateway.api_key is not accepted in config files; set UNTWIST_API_KEY");
      check_keys(*it, "gateway.", {"base_url", "chat_model", "transcription_model", "timeout_s",
                                   "max_retries", "temperature", "backoff_ms", "max_in_flight"});
      auto& g = cfg.gateway;
      maybe(*it, "base_url", g.base_url);
      maybe(*it, "chat_model", g.chat_model);
      maybe(*it, "transcription_model", g.transcription_model);
      maybe(*it, "timeout_s", g.timeout_s);
      maybe(*it, "max_retries", g.max_retries);
      maybe(*it, "temperature", g.temperature);
      if (const auto b = it->find("backoff_ms"); b != it->end())
        g.backoff_base = std::chrono::milliseconds(b->get<std::int64_t>());
      maybe(*it, "max_in_flight", g.max_in_flight);
    }
    if (const auto it = doc.find("bench"); it != doc.end()) cfg.generator = it->get<bench::GeneratorConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid config value: {}", e.what()));
  }
}

json to_json(const AppConfig& cfg) {
  const auto& g = cfg.gateway;
  return {
      {"data_dir", cfg.data_dir.string()},
      {"sampling_interval_s", cfg.sampling_interval_s},
      {"keyframe",
       {{"k_min", cfg.k_min},
        {"k_max", cfg.k_max ? json(*cfg.k_max) : json(nullptr)},
        {"tau", cfg.tau},
        {"seed", cfg.seed},
        {"restarts", cfg.restarts}}},
      {"annotation",
       {{"color", {cfg.style.color.r, cfg.style.color.g, cfg.style.color.b}},
        {"stroke_px", cfg.style.stroke_px},
        {"auto_contrast", cfg.auto_contrast}}},
      {"history_turns", cfg.history_turns},
      {"gateway",
       {{"base_url", g.base_url},
        {"chat_model", g.chat_model},
        {"transcription_model", g.transcription_model},
        {"timeout_s", g.timeout_s},
        {"max_retries", g.max_retries},
        {"temperature", g.temperature},
        {"backoff_ms", g.backoff_base.count()},
        {"max_in_flight", g.max_in_flight}}},
      {"bench", cfg.generator},
  };
}

AppConfig resolve_config(const std::optional<fs::path>& config_file, const ConfigOverrides& flags,
                         const Environment& env) {
  auto env_value = [&](const char* name) -> std::optional<std::string> {
    const auto it = env.find(name);
    if (it == env.end() || it->second.empty()) return std::nullopt;
    return it->second;
  };

  AppConfig cfg;
  // The data directory decides where the implicit file lives.
  fs::path data_dir = cfg.data_dir;
  if (flags.data_dir) data_dir = *flags.data_dir;
  if (auto v = env_value("UNTWIST_DATA_DIR")) data_dir = *v;

  std::optional<fs::path> file = config_file;
  if (!file && fs::exists(data_dir / "config.json")) file = data_dir / "config.json";
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + file->string());
    apply_file(cfg, doc);
  }

  if (flags.data_dir) cfg.data_dir = *flags.data_dir;
  if (flags.sampling_interval_s) cfg.sampling_interval_s = *flags.sampling_interval_s;
  if (flags.k_max) cfg.k_max = *flags.k_max;
  if (flags.tau) cfg.tau = *flags.tau;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.base_url) cfg.gateway.base_url = *flags.base_url;
  if (flags.chat_model) cfg.gateway.chat_model = *flags.chat_model;
  if (flags.stroke_px) cfg.style.stroke_px = *flags.stroke_px;

  if (auto v = env_value("UNTWIST_DATA_DIR")) cfg.data_dir = *v;
  if (auto v = env_value(llm::kApiKeyEnv)) cfg.gateway.api_key = *v;
  if (auto v = env_value(llm::kBaseUrlEnv)) cfg.gateway.base_url = *v;
  if (auto v = env_value("UNTWIST_CHAT_MODEL")) cfg.gateway.chat_model = *v;
  if (auto v = env_value("UNTWIST_TRANSCRIPTION_MODEL")) cfg.gateway.transcription_model = *v;
  if (auto v = env_value("UNTWIST_INTERVAL_S"))
    cfg.sampling_interval_s = parse_double("UNTWIST_INTERVAL_S", *v);
  if (auto v = env_value("UNTWIST_K_MAX")) cfg.k_max = parse_int<std::size_t>("UNTWIST_K_MAX", *v);
  if (auto v = env_value("UNTWIST_TAU")) cfg.tau = parse_double("UNTWIST_TAU", *v);
  if (auto v = env_value("UNTWIST_SEED")) cfg.seed = parse_int<std::uint64_t>("UNTWIST_SEED", *v);
  if (auto v = env_value("UNTWIST_STROKE_PX")) cfg.style.stroke_px = parse_int<int>("UNTWIST_STROKE_PX", *v);

  cfg.validate();
  return cfg;
}

}  // namespace untwist
