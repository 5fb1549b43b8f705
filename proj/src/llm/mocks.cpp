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

#include "untwist/llm/mocks.hpp"

#include <regex>

#include <json.hpp>

namespace untwist::llm {

ScriptedChat::ScriptedChat(std::vector<Step> steps, std::string model)
    : steps_(steps.begin(), steps.end()), model_(std::move(model)) {}

std::string ScriptedChat::chat(std::span<const ChatMessage> history) {
  validate_history(history);
  std::lock_guard lock(mu_);
  ++calls_;
  if (steps_.empty())
    throw GatewayError(GatewayErrc::MalformedResponse, "scripted chat exhausted");
  Step step = std::move(steps_.front());
  steps_.pop_front();
  if (auto* err = std::get_if<GatewayError>(&step)) throw *err;
  return std::get<std::string>(std::move(step));
}

std::size_t ScriptedChat::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string EchoChat::chat(std::span<const ChatMessage> history) {
  validate_history(history);
  return history.back().text;
}

std::string RecordingChat::chat(std::span<const ChatMessage> history) {
  {
    std::lock_guard lock(mu_);
    calls_.emplace_back(history.begin(), history.end());
  }
  return inner_.chat(history);
}

std::vector<std::vector<ChatMessage>> RecordingChat::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string OfflineChat::chat(std::span<const ChatMessage> history) {
  validate_history(history);
  const std::string& text = history.back().text;
  if (text.find("Return your answer in the following JSON format") == std::string::npos)
    return text;
  static const std::regex kCaptured(R"(captured at\s+([0-9.]+) seconds)");
  std::smatch m;
  const std::string when = std::regex_search(text, m, kCaptured) ? m[1].str() : "?";
  nlohmann::json reply{{"math", ""},
                       {"text", "offline analysis of the frame at " + when + " seconds"},
                       {"graph", ""},
                       {"other_shapes", ""},
                       {"additional_info", ""}};
  return reply.dump();
}

std::string OracleVisionMock::chat(std::span<const ChatMessage> history) {
  validate_history(history);
  std::string reply;
  for (const auto& word : scene_.words) {
    if (competence_ == VisionCompetence::Spatial && !scene_.target.contains(word.rect.center()))
      continue;
    if (!reply.empty()) reply += ' ';
    reply += word.token;
  }
  return reply;
}

std::string OracleVisionMock::model_name() const {
  return competence_ == VisionCompetence::Spatial ? "mock-spatial" : "mock-blind";
}

std::string ScriptedTranscriber::transcribe_audio(const AudioTrack&) {
  if (const auto* err = std::get_if<GatewayError>(&result_)) throw *err;
  return std::get<std::string>(result_);
}

HttpResponse ScriptedTransport::post(const HttpRequest& request) {
  std::lock_guard lock(mu_);
  requests_.push_back(request);
  if (steps_.empty()) throw TransportFailure("scripted transport exhausted", false);
  Step step = std::move(steps_.front());
  steps_.pop_front();
  if (auto* failure = std::get_if<TransportFailure>(&step)) throw *failure;
  return std::get<HttpResponse>(std::move(step));
}

std::vector<HttpRequest> ScriptedTransport::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::string chat_completion_body(const std::string& content) {
  nlohmann::json body{
      {"object", "chat.completion"},
      {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}};
  return body.dump();
}

}  // namespace untwist::llm
