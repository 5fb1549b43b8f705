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

#include "untwist/describe/deep_description.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace untwist::describe {

using nlohmann::json;

namespace {

constexpr std::string_view kTranscriptLead =
    "This is the transcribed audio from an educational video: \n";
constexpr std::string_view kSchemaInstruction =
    "Please analyze the image and describe its content. \n"
    "Return your answer in the following JSON format:\n"
    "{\n"
    "  'math': 'math expression in LaTeX',\n"
    "  'text': 'descriptive text present in the image',\n"
    "  'graph': 'description of any graph observed',\n"
    "  'other_shapes': 'description of any other shapes or figures',\n"
    "  'additional_info': 'any additional observations'\n"
    "}";
constexpr std::string_view kStrictRetry = "Reply with only the JSON object.";

constexpr std::string_view kRefinePrompt =
    "You are preparing the study notes an interactive tutor will rely on. "
    "Structure these frame analyses and transcript into a coherent lesson summary, "
    "preserving equations verbatim. Follow the order in which topics appear in the "
    "video, connect each visual element to what the speaker says about it, and keep "
    "any text that appears on screen.";

constexpr std::size_t kDigestLimit = 4000;

// [begin, end) of a balanced {...} starting at `open`, honoring quoted strings.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  char quote = 0;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

// Python-dict style ({'k': 'v', 'n': None}) to JSON.
std::string pythonish_to_json(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  char quote = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (c == '\\' && i + 1 < s.size()) {
        if (s[i + 1] == '\'') {
          out += '\'';
        } else {
          out += c;
          out += s[i + 1];
        }
        ++i;
      } else if (c == quote) {
        out += '"';
        quote = 0;
      } else if (c == '"' && quote == '\'') {
        out += "\\\"";
      } else {
        out += c;
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      out += '"';
    } else if (s.substr(i, 4) == "None") {
      out += "null";
      i += 3;
    } else if (s.substr(i, 4) == "True") {
      out += "true";
      i += 3;
    } else if (s.substr(i, 5) == "False") {
      out += "false";
      i += 4;
    } else {
      out += c;
    }
  }
  return out;
}

std::string field_text(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return "";
  if (it->is_string()) return it->get<std::string>();
  return it->dump(-1, ' ', false, json::error_handler_t::replace);
}

// Cuts at a UTF-8 code point boundary.
std::string utf8_prefix(const std::string& s, std::size_t limit) {
  if (s.size() <= limit) return s;
  std::size_t cut = limit;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return s.substr(0, cut);
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
      space = !out.empty();
    } else {
      if (space) out += ' ';
      space = false;
      out += c;
    }
  }
  return out;
}

std::string refinement_material(const media::Transcript& transcript,
                                std::span<const FrameDescription> entries) {
  std::string out = "Transcript:\n" + transcript.text + "\n\nFrame analyses:\n";
  for (const auto& e : entries) {
    out += "[" + format_timestamp(e.timestamp_s) + " seconds]\n";
    if (!e.math.empty()) out += "math: " + e.math + "\n";
    if (!e.text.empty()) out += "text: " + e.text + "\n";
    if (!e.graph.empty()) out += "graph: " + e.graph + "\n";
    if (!e.other_shapes.empty()) out += "other_shapes: " + e.other_shapes + "\n";
    if (!e.additional_info.empty()) out += "additional_info: " + e.additional_info + "\n";
  }
  return out;
}

}  // namespace

void to_json(json& j, const FrameDescription& d) {
  j = json{{"timestamp_s", d.timestamp_s},   {"math", d.math},
           {"text", d.text},                 {"graph", d.graph},
           {"other_shapes", d.other_shapes}, {"additional_info", d.additional_info}};
}

void from_json(const json& j, FrameDescription& d) {
  d.timestamp_s = j.at("timestamp_s").get<double>();
  d.math = j.value("math", "");
  d.text = j.value("text", "");
  d.graph = j.value("graph", "");
  d.other_shapes = j.value("other_shapes", "");
  d.additional_info = j.value("additional_info", "");
}

void to_json(json& j, const DeepDescription& d) {
  j = json{{"version", d.version},
           {"narrative", d.narrative},
           {"transcript_digest", d.transcript_digest},
           {"frame_entries", d.frame_entries}};
}

void from_json(const json& j, DeepDescription& d) {
  d.version = j.at("version").get<std::string>();
  if (d.version != kSchemaVersion)
    throw std::runtime_error("unsupported deep description version: " + d.version);
  d.narrative = j.at("narrative").get<std::string>();
  d.transcript_digest = j.value("transcript_digest", "");
  d.frame_entries = j.at("frame_entries").get<std::vector<FrameDescription>>();
}

void save(const std::filesystem::path& path, const DeepDescription& dd) {
  std::ofstream out(path, std::ios::trunc);
  out << json(dd).dump(2, ' ', false, json::error_handler_t::replace) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

DeepDescription load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in).get<DeepDescription>();
}

std::string PromptBundle::text() const {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "\n\n";
    out += p;
  }
  return out;
}

std::string format_timestamp(double seconds) {
  const double whole = std::round(seconds);
  if (std::abs(seconds - whole) < 1e-9) return fmt::format("{}", static_cast<long long>(whole));
  return fmt::format("{:.1f}", seconds);
}

PromptBundle build_frame_prompt(const media::Transcript& transcript,
                                const keyframe::KeyFrame& keyframe) {
  PromptBundle bundle;
  bundle.parts.push_back(std::string(kTranscriptLead) + transcript.text);
  bundle.parts.push_back("This is an image frame from the educational video, captured at " +
                         format_timestamp(keyframe.frame.timestamp_s) +
                         " seconds: [attached image]");
  bundle.parts.emplace_back(kSchemaInstruction);
  bundle.images.push_back({encode_png(keyframe.frame.pixels), "auto"});
  return bundle;
}

FrameDescription parse_frame_description(std::string_view raw, double timestamp_s) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos;
       open = raw.find('{', open + 1)) {
    const auto end = balanced_end(raw, open);
    if (!end) continue;
    const std::string_view candidate = raw.substr(open, *end - open);
    json obj = json::parse(candidate, nullptr, false);
    if (obj.is_discarded()) obj = json::parse(pythonish_to_json(candidate), nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) continue;
    FrameDescription d;
    d.math = field_text(obj, "math");
    d.text = field_text(obj, "text");
    d.graph = field_text(obj, "graph");
    d.other_shapes = field_text(obj, "other_shapes");
    d.additional_info = field_text(obj, "additional_info");
    d.timestamp_s = timestamp_s;
    return d;
  }
  throw MalformedReply("no JSON object found in model reply");
}

std::string_view refine_system_prompt() { return kRefinePrompt; }

std::vector<FrameDescription> describe_keyframes(const media::Transcript& transcript,
                                                 std::span<const keyframe::KeyFrame> keyframes,
                                                 llm::ChatClient& chat,
                                                 const DescribeOptions& options) {
  std::vector<FrameDescription> out(keyframes.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto describe_one = [&](const keyframe::KeyFrame& kf) {
    PromptBundle bundle = build_frame_prompt(transcript, kf);
    const double t = kf.frame.timestamp_s;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const std::vector<llm::ChatMessage> history{bundle.to_message()};
      const std::string reply = chat.chat(history);
      try {
        return parse_frame_description(reply, t);
      } catch (const MalformedReply&) {
        spdlog::warn("keyframe at {} s: unparsable analysis (attempt {})", format_timestamp(t),
                     attempt + 1);
      }
      bundle.parts.emplace_back(kStrictRetry);
    }
    spdlog::warn("keyframe at {} s: recording an empty description", format_timestamp(t));
    FrameDescription empty;
    empty.timestamp_s = t;
    return empty;
  };

  auto work = [&] {
    for (std::size_t i = next++; i < keyframes.size(); i = next++) {
      {
        std::lock_guard lock(failure_mu);
        if (failure) return;
      }
      try {
        out[i] = describe_one(keyframes[i]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const std::size_t workers =
      std::clamp<std::size_t>(options.max_in_flight, 1, std::max<std::size_t>(keyframes.size(), 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::stable_sort(out.begin(), out.end(), [](const FrameDescription& a, const FrameDescription& b) {
    return a.timestamp_s < b.timestamp_s;
  });
  return out;
}

DeepDescription compose_deep_description(const media::Transcript& transcript,
                                         std::vector<FrameDescription> entries,
                                         llm::ChatClient& chat) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const FrameDescription& a, const FrameDescription& b) {
                     return a.timestamp_s < b.timestamp_s;
                   });
  DeepDescription dd;
  dd.transcript_digest = utf8_prefix(collapse_whitespace(transcript.text), kDigestLimit);
  const bool any_content =
      !transcript.text.empty() ||
      std::any_of(entries.begin(), entries.end(), [](const auto& e) { return !e.empty(); });
  dd.frame_entries = std::move(entries);
  if (!any_content) return dd;

  const std::string material = refinement_material(transcript, dd.frame_entries);
  const std::vector<llm::ChatMessage> history{
      llm::ChatMessage::system(std::string(kRefinePrompt)), llm::ChatMessage::user(material)};
  dd.narrative = chat.chat(history);
  if (dd.narrative.empty()) {
    spdlog::warn("refinement returned an empty narrative; keeping the unrefined material");
    dd.narrative = material;
  }
  return dd;
}

}  // namespace untwist::describe
