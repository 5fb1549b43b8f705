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

// Spatial-grounding benchmark: synthetic word images, two ways of pointing a
// vision model at a region, and token-overlap scoring.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "untwist/annotate/box.hpp"
#include "untwist/geometry.hpp"
#include "untwist/image.hpp"
#include "untwist/llm/gateway.hpp"
#include "untwist/llm/mocks.hpp"

namespace untwist::bench {

class PlacementFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeneratorConfig {
  int min_dim = 1200;
  int max_dim = 2000;
  int min_words = 8;
  int max_words = 20;
  int min_word_len = 3;
  int max_word_len = 10;
  int min_font_px = 28;
  int max_font_px = 64;
  int min_group = 1;
  int max_group = 3;
  int max_attempts = 1000;

  void validate() const;  // throws std::invalid_argument
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

struct PlacedWord {
  std::string token;
  Rect rect;  // pixel rectangle enclosing the rendered glyphs
};

struct BenchCase {
  std::uint64_t seed = 0;
  RgbImage image;  // clean: white background, black text, no box
  int width = 0;
  int height = 0;
  int font_px = 0;
  std::vector<PlacedWord> words;  // reading order
  Rect target_region;
  std::vector<std::string> ground_truth;  // tokens whose centers lie in target_region

  std::string truth_text() const;
  llm::SceneGraph scene() const;
};

/// Deterministic for a fixed seed. Words are unique lowercase ASCII strings
/// laid out in lines without overlap; the target encloses a contiguous run
/// of words on one line. Throws PlacementFailure if no layout fits within
/// max_attempts.
BenchCase generate_case(std::uint64_t seed, const GeneratorConfig& cfg = {});

enum class Strategy { Annotated, RawCoordinate };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);

struct BenchPrompt {
  std::string text;
  RgbImage image;

  llm::ChatMessage to_message() const;
};

/// Annotated: red box burned into the image, no numbers in the text.
/// Raw-coordinate: clean image, text states image size and region numbers.
BenchPrompt render_prompt(const BenchCase& c, Strategy strategy);

/// Hash of the instruction templates, part of the response cache key.
std::string prompt_template_hash();

struct ScoreTriple {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Whitespace split, lowercase, set intersection.
ScoreTriple score(std::string_view response, std::string_view truth);

struct CaseResult {
  std::uint64_t seed = 0;
  ScoreTriple scores;
  std::string response;
  std::optional<std::string> error;
  std::size_t truth_tokens = 0;
  std::size_t word_count = 0;
};

struct BenchReport {
  Strategy strategy = Strategy::Annotated;
  std::string model;
  std::size_t n_cases = 0;   // scored cases
  std::size_t failures = 0;  // cases whose chat call failed
  double mean_precision = 0;
  double mean_recall = 0;
  double mean_f1 = 0;
  std::vector<CaseResult> per_case;

  /// Harmonic mean of mean_precision and mean_recall.
  double harmonic_f1() const;
};

/// Macro averages over the successful cases.
BenchReport summarize(Strategy strategy, std::string model, std::vector<CaseResult> results);

nlohmann::json to_json(const BenchReport& report);

/// Precision / Recall / F1 rows in percent with two decimals, one column per
/// report, plus the harmonic-of-means F1 row.
std::string format_table(std::span<const BenchReport> reports);

using ChatFactory = std::function<std::unique_ptr<llm::ChatClient>(const BenchCase&)>;

struct RunOptions {
  GeneratorConfig generator;
  std::optional<std::filesystem::path> cache_dir;
  std::string model = "unknown";
  std::size_t workers = 1;
};

/// Cases use seeds 0..n-1. Raw replies are cached under cache_dir keyed by
/// (seed, strategy, model, template hash) when a cache is configured.
BenchReport run_benchmark(std::size_t n, Strategy strategy, const ChatFactory& chat,
                          const RunOptions& options);

/// Factory answering every case with an oracle mock of the given competence.
ChatFactory oracle_factory(llm::VisionCompetence competence);

/// Writes case_%04d.png (clean), case_%04d_annotated.png and cases.json.
void write_corpus(const std::filesystem::path& dir, std::size_t n, const GeneratorConfig& cfg);

}  // namespace untwist::bench
