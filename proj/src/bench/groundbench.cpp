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

#include "untwist/bench/groundbench.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

namespace untwist::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kFontFace = cv::FONT_HERSHEY_SIMPLEX;
constexpr int kTargetPad = 12;  // box clearance around the enclosed glyphs
constexpr int kPageMargin = 48;

constexpr std::string_view kAnnotatedTemplate =
    "Extract and return the text contained within the red box in this image. "
    "Reply with only the extracted words, separated by spaces.";
constexpr std::string_view kRawTemplate =
    "This image is {width} pixels wide and {height} pixels tall. "
    "Extract and return the text contained within the region with "
    "Coordinates: x={x}, y={y}, width={w}, height={h} "
    "(pixels, origin at the top-left corner). "
    "Reply with only the extracted words, separated by spaces.";

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed ^ 0xA0761D6478BD642FULL) {}
  // Inclusive range.
  int uniform(int lo, int hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + std::min(static_cast<int>(u * (hi - lo + 1)), hi - lo);
  }

 private:
  std::mt19937_64 engine_;
};

struct Layout {
  int width = 0, height = 0, font_px = 0, thickness = 1;
  double scale = 1;
  std::vector<PlacedWord> words;
  std::vector<cv::Point> origins;
  std::vector<std::vector<std::size_t>> lines;
};

std::optional<Layout> try_layout(Rng& rng, const GeneratorConfig& cfg) {
  Layout l;
  l.width = rng.uniform(cfg.min_dim, cfg.max_dim);
  l.height = rng.uniform(cfg.min_dim, cfg.max_dim);
  l.font_px = rng.uniform(cfg.min_font_px, cfg.max_font_px);
  l.thickness = std::max(1, l.font_px / 16);
  l.scale = cv::getFontScaleFromHeight(kFontFace, l.font_px, l.thickness);

  const int n_words = rng.uniform(cfg.min_words, cfg.max_words);
  std::unordered_set<std::string> seen;
  std::vector<std::string> tokens;
  while (static_cast<int>(tokens.size()) < n_words) {
    std::string w(static_cast<std::size_t>(rng.uniform(cfg.min_word_len, cfg.max_word_len)), 'a');
    for (char& ch : w) ch = static_cast<char>('a' + rng.uniform(0, 25));
    if (seen.insert(w).second) tokens.push_back(std::move(w));
  }

  const int min_gap = 3 * kTargetPad;
  int y_top = kPageMargin + rng.uniform(0, 60);
  int x = kPageMargin + rng.uniform(0, 80);
  int line_height = 0;
  l.lines.emplace_back();
  for (const auto& token : tokens) {
    int baseline = 0;
    const cv::Size size = cv::getTextSize(token, kFontFace, l.scale, l.thickness, &baseline);
    const int t = l.thickness;
    const int rise = size.height / 4 + 1;  // ascenders overshoot the reported cap height
    const int w = size.width + 2 * t;
    const int h = rise + size.height + baseline + 2 * t;
    if (w > l.width - 2 * kPageMargin) return std::nullopt;
    if (x + w > l.width - kPageMargin && !l.lines.back().empty()) {
      y_top += line_height + 2 * kTargetPad + rng.uniform(8, 8 + l.font_px);
      x = kPageMargin + rng.uniform(0, 80);
      line_height = 0;
      l.lines.emplace_back();
    }
    if (x + w > l.width - kPageMargin) return std::nullopt;
    line_height = std::max(line_height, h);
    const Rect rect{static_cast<double>(x), static_cast<double>(y_top), static_cast<double>(w),
                    static_cast<double>(h)};
    if (rect.bottom() > l.height - kPageMargin) return std::nullopt;
    l.lines.back().push_back(l.words.size());
    l.words.push_back({token, rect});
    l.origins.emplace_back(x + t, y_top + t + rise + size.height);
    x += w + min_gap + rng.uniform(0, 2 * l.font_px);
  }
  for (std::size_t i = 0; i < l.words.size(); ++i)
    for (std::size_t j = i + 1; j < l.words.size(); ++j)
      if (l.words[i].rect.intersects(l.words[j].rect)) return std::nullopt;
  return l;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string replace_all(std::string s, std::string_view key, const std::string& value) {
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
    s.replace(pos, key.size(), value);
  return s;
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.' && c != '_') c = '_';
  return s;
}

json rect_json(const Rect& r) {
  return {{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}};
}

}  // namespace

void GeneratorConfig::validate() const {
  auto range = [](int lo, int hi, const char* what) {
    if (lo > hi) throw std::invalid_argument(fmt::format("generator {}: min > max", what));
  };
  range(min_dim, max_dim, "dimensions");
  range(min_words, max_words, "word count");
  range(min_word_len, max_word_len, "word length");
  range(min_font_px, max_font_px, "font size");
  range(min_group, max_group, "group size");
  if (min_dim < 200) throw std::invalid_argument("generator dimensions too small");
  if (min_words < 1 || min_word_len < 1 || min_font_px < 6 || min_group < 1)
    throw std::invalid_argument("generator minimums must be positive");
  if (max_attempts < 1) throw std::invalid_argument("generator max_attempts must be >= 1");
}

void to_json(json& j, const GeneratorConfig& c) {
  j = json{{"min_dim", c.min_dim},         {"max_dim", c.max_dim},
           {"min_words", c.min_words},     {"max_words", c.max_words},
           {"min_word_len", c.min_word_len}, {"max_word_len", c.max_word_len},
           {"min_font_px", c.min_font_px}, {"max_font_px", c.max_font_px},
           {"min_group", c.min_group},     {"max_group", c.max_group},
           {"max_attempts", c.max_attempts}};
}

void from_json(const json& j, GeneratorConfig& c) {
  GeneratorConfig d;
  c.min_dim = j.value("min_dim", d.min_dim);
  c.max_dim = j.value("max_dim", d.max_dim);
  c.min_words = j.value("min_words", d.min_words);
  c.max_words = j.value("max_words", d.max_words);
  c.min_word_len = j.value("min_word_len", d.min_word_len);
  c.max_word_len = j.value("max_word_len", d.max_word_len);
  c.min_font_px = j.value("min_font_px", d.min_font_px);
  c.max_font_px = j.value("max_font_px", d.max_font_px);
  c.min_group = j.value("min_group", d.min_group);
  c.max_group = j.value("max_group", d.max_group);
  c.max_attempts = j.value("max_attempts", d.max_attempts);
}

std::string BenchCase::truth_text() const {
  std::string out;
  for (const auto& t : ground_truth) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

llm::SceneGraph BenchCase::scene() const {
  llm::SceneGraph g;
  for (const auto& w : words) g.words.push_back({w.token, w.rect});
  g.target = target_region;
  return g;
}

BenchCase generate_case(std::uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    auto layout = try_layout(rng, cfg);
    if (!layout) continue;

    std::vector<std::size_t> usable;
    for (std::size_t li = 0; li < layout->lines.size(); ++li)
      if (!layout->lines[li].empty()) usable.push_back(li);
    const auto& line = layout->lines[usable[static_cast<std::size_t>(
        rng.uniform(0, static_cast<int>(usable.size()) - 1))]];
    const int max_g = std::min(cfg.max_group, static_cast<int>(line.size()));
    if (max_g < cfg.min_group) continue;
    const int group = rng.uniform(cfg.min_group, max_g);
    const int first = rng.uniform(0, static_cast<int>(line.size()) - group);

    double x0 = 1e18, y0 = 1e18, x1 = -1e18, y1 = -1e18;
    for (int g = 0; g < group; ++g) {
      const Rect& r = layout->words[line[static_cast<std::size_t>(first + g)]].rect;
      x0 = std::min(x0, r.x);
      y0 = std::min(y0, r.y);
      x1 = std::max(x1, r.right());
      y1 = std::max(y1, r.bottom());
    }
    const Rect target = Rect{x0, y0, x1 - x0, y1 - y0}.inflated(kTargetPad);
    if (target.x < 0 || target.y < 0 || target.right() > layout->width ||
        target.bottom() > layout->height)
      continue;

    BenchCase c;
    c.seed = seed;
    c.width = layout->width;
    c.height = layout->height;
    c.font_px = layout->font_px;
    c.target_region = target;
    c.image = RgbImage(c.width, c.height, Rgb{255, 255, 255});
    cv::Mat canvas(c.height, c.width, CV_8UC3, c.image.bytes().data());
    for (std::size_t i = 0; i < layout->words.size(); ++i)
      cv::putText(canvas, layout->words[i].token, layout->origins[i], kFontFace, layout->scale,
                  cv::Scalar(0, 0, 0), layout->thickness, cv::LINE_8);
    c.words = std::move(layout->words);
    for (const auto& w : c.words)
      if (target.contains(w.rect.center())) c.ground_truth.push_back(w.token);
    if (static_cast<int>(c.ground_truth.size()) != group) continue;
    return c;
  }
  throw PlacementFailure(fmt::format("no layout for seed {} after {} attempts", seed,
                                     cfg.max_attempts));
}

std::string_view to_string(Strategy s) {
  return s == Strategy::Annotated ? "annotated" : "raw";
}

std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "annotated") return Strategy::Annotated;
  if (s == "raw" || s == "raw-coordinate") return Strategy::RawCoordinate;
  return std::nullopt;
}

llm::ChatMessage BenchPrompt::to_message() const {
  return llm::ChatMessage::user(text, {llm::ImageAttachment{encode_png(image), "high"}});
}

BenchPrompt render_prompt(const BenchCase& c, Strategy strategy) {
  if (strategy == Strategy::Annotated) {
    const annotate::BoundingBox box{c.target_region.x, c.target_region.y, c.target_region.width,
                                    c.target_region.height, annotate::Space::FramePixels};
    return {std::string(kAnnotatedTemplate), annotate::draw_box(c.image, box, {})};
  }
  auto num = [](double v) { return fmt::format("{}", std::lround(v)); };
  std::string text(kRawTemplate);
  text = replace_all(text, "{width}", std::to_string(c.width));
  text = replace_all(text, "{height}", std::to_string(c.height));
  text = replace_all(text, "{x}", num(c.target_region.x));
  text = replace_all(text, "{y}", num(c.target_region.y));
  text = replace_all(text, "{w}", num(c.target_region.width));
  text = replace_all(text, "{h}", num(c.target_region.height));
  return {std::move(text), c.image};
}

std::string prompt_template_hash() {
  return fnv1a_hex(std::string(kAnnotatedTemplate) + "\n--\n" + std::string(kRawTemplate));
}

ScoreTriple score(std::string_view response, std::string_view truth) {
  const auto resp = tokenize(response);
  const auto gold = tokenize(truth);
  const std::set<std::string> resp_set(resp.begin(), resp.end());
  const std::set<std::string> gold_set(gold.begin(), gold.end());
  std::size_t common = 0;
  for (const auto& t : resp_set) common += gold_set.count(t);

  ScoreTriple s;
  s.precision = resp_set.empty() ? 0.0 : static_cast<double>(common) / resp_set.size();
  s.recall = gold_set.empty() ? 0.0 : static_cast<double>(common) / gold_set.size();
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double BenchReport::harmonic_f1() const {
  const double sum = mean_precision + mean_recall;
  return sum > 0 ? 2 * mean_precision * mean_recall / sum : 0.0;
}

BenchReport summarize(Strategy strategy, std::string model, std::vector<CaseResult> results) {
  std::sort(results.begin(), results.end(),
            [](const CaseResult& a, const CaseResult& b) { return a.seed < b.seed; });
  BenchReport r;
  r.strategy = strategy;
  r.model = std::move(model);
  double p = 0, rc = 0, f = 0;
  for (const auto& c : results) {
    if (c.error) {
      ++r.failures;
      continue;
    }
    ++r.n_cases;
    p += c.scores.precision;
    rc += c.scores.recall;
    f += c.scores.f1;
  }
  if (r.n_cases > 0) {
    const auto n = static_cast<double>(r.n_cases);
    r.mean_precision = p / n;
    r.mean_recall = rc / n;
    r.mean_f1 = f / n;
  }
  r.per_case = std::move(results);
  return r;
}

json to_json(const BenchReport& report) {
  json cases = json::array();
  for (const auto& c : report.per_case) {
    json e{{"seed", c.seed},
           {"precision", c.scores.precision},
           {"recall", c.scores.recall},
           {"f1", c.scores.f1},
           {"truth_tokens", c.truth_tokens},
           {"word_count", c.word_count}};
    if (c.error) e["error"] = *c.error;
    cases.push_back(std::move(e));
  }
  return json{{"strategy", to_string(report.strategy)},
              {"model", report.model},
              {"n_cases", report.n_cases},
              {"failures", report.failures},
              {"mean_precision", report.mean_precision},
              {"mean_recall", report.mean_recall},
              {"mean_f1", report.mean_f1},
              {"harmonic_f1_of_means", report.harmonic_f1()},
              {"prompt_template_hash", prompt_template_hash()},
              {"per_case", std::move(cases)}};
}

std::string format_table(std::span<const BenchReport> reports) {
  constexpr int kLabel = 22;
  constexpr int kCol = 17;
  std::string out = fmt::format("{:<{}}", "Approach", kLabel);
  for (const auto& r : reports)
    out += fmt::format("{:>{}}", r.strategy == Strategy::Annotated ? "Annotated Frame" : "Raw Coordinate",
                       kCol);
  out += '\n';
  auto row = [&](const char* label, auto value) {
    out += fmt::format("{:<{}}", label, kLabel);
    for (const auto& r : reports) out += fmt::format("{:>{}.2f}", 100.0 * value(r), kCol);
    out += '\n';
  };
  row("Precision (%)", [](const BenchReport& r) { return r.mean_precision; });
  row("Recall (%)", [](const BenchReport& r) { return r.mean_recall; });
  row("F1 Score (%)", [](const BenchReport& r) { return r.mean_f1; });
  row("F1 of means (%)", [](const BenchReport& r) { return r.harmonic_f1(); });
  out += fmt::format("{:<{}}", "Cases (failed)", kLabel);
  for (const auto& r : reports)
    out += fmt::format("{:>{}}", fmt::format("{} ({})", r.n_cases, r.failures), kCol);
  out += '\n';
  return out;
}

BenchReport run_benchmark(std::size_t n, Strategy strategy, const ChatFactory& chat,
                          const RunOptions& options) {
  if (n < 1) throw std::invalid_argument("benchmark needs n >= 1");
  options.generator.validate();

  std::optional<fs::path> cache;
  if (options.cache_dir) {
    cache = *options.cache_dir / sanitize(options.model) / std::string(to_string(strategy)) /
            prompt_template_hash();
    fs::create_directories(*cache);
  }

  std::vector<CaseResult> results(n);
  std::atomic<std::size_t> next{0};
  auto run_case = [&](std::size_t i) {
    CaseResult& out = results[i];
    out.seed = i;
    BenchCase c;
    try {
      c = generate_case(i, options.generator);
    } catch (const std::exception& e) {
      out.error = e.what();
      return;
    }
    out.truth_tokens = c.ground_truth.size();
    out.word_count = c.words.size();

    const std::optional<fs::path> cached =
        cache ? std::optional(*cache / fmt::format("seed_{:06d}.txt", i)) : std::nullopt;
    if (cached && fs::exists(*cached)) {
      std::ifstream in(*cached, std::ios::binary);
      out.response.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    } else {
      try {
        const BenchPrompt prompt = render_prompt(c, strategy);
        auto client = chat(c);
        const std::vector<llm::ChatMessage> history{prompt.to_message()};
        out.response = client->chat(history);
      } catch (const std::exception& e) {
        spdlog::warn("bench seed {} failed: {}", i, e.what());
        out.error = e.what();
        return;
      }
      if (cached) {
        std::ofstream f(*cached, std::ios::binary | std::ios::trunc);
        f << out.response;
      }
    }
    out.scores = score(out.response, c.truth_text());
  };

  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) run_case(i);
  };
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, n);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return summarize(strategy, options.model, std::move(results));
}

ChatFactory oracle_factory(llm::VisionCompetence competence) {
  return [competence](const BenchCase& c) -> std::unique_ptr<llm::ChatClient> {
    return std::make_unique<llm::OracleVisionMock>(c.scene(), competence);
  };
}

void write_corpus(const fs::path& dir, std::size_t n, const GeneratorConfig& cfg) {
  fs::create_directories(dir);
  json cases = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const BenchCase c = generate_case(i, cfg);
    write_png(dir / fmt::format("case_{:04d}.png", i), c.image);
    write_png(dir / fmt::format("case_{:04d}_annotated.png", i),
              render_prompt(c, Strategy::Annotated).image);
    json words = json::array();
    for (const auto& w : c.words) words.push_back({{"token", w.token}, {"rect", rect_json(w.rect)}});
    cases.push_back({{"seed", c.seed},
                     {"width", c.width},
                     {"height", c.height},
                     {"font_px", c.font_px},
                     {"words", std::move(words)},
                     {"target_region", rect_json(c.target_region)},
                     {"ground_truth", c.ground_truth},
                     {"raw_prompt", render_prompt(c, Strategy::RawCoordinate).text}});
  }
  std::ofstream out(dir / "cases.json", std::ios::trunc);
  out << json{{"generator", cfg}, {"prompt_template_hash", prompt_template_hash()},
              {"annotated_prompt", std::string(kAnnotatedTemplate)}, {"cases", std::move(cases)}}
             .dump(2)
      << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "cases.json").string());
}

}  // namespace untwist::bench
