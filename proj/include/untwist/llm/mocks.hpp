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

// Deterministic stand-ins for the gateway, for offline runs and tests.

#pragma once

#include <deque>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "untwist/geometry.hpp"
#include "untwist/llm/gateway.hpp"

namespace untwist::llm {

/// Replays a fixed queue of replies or errors, one per call. Throws
/// GatewayError(MalformedResponse) once the queue is exhausted.
class ScriptedChat final : public ChatClient {
 public:
  using Step = std::variant<std::string, GatewayError>;

  explicit ScriptedChat(std::vector<Step> steps, std::string model = "scripted");
  std::string chat(std::span<const ChatMessage> history) override;
  std::string model_name() const override { return model_; }
  std::size_t calls() const;

 private:
  mutable std::mutex mu_;
  std::deque<Step> steps_;
  std::size_t calls_ = 0;
  std::string model_;
};

/// Returns the text of the final user message.
class EchoChat final : public ChatClient {
 public:
  std::string chat(std::span<const ChatMessage> history) override;
  std::string model_name() const override { return "echo"; }
};

/// Decorator that keeps a copy of every history it forwards.
class RecordingChat final : public ChatClient {
 public:
  explicit RecordingChat(ChatClient& inner) : inner_(inner) {}
  std::string chat(std::span<const ChatMessage> history) override;
  std::string model_name() const override { return inner_.model_name(); }

  std::vector<std::vector<ChatMessage>> calls() const;

 private:
  ChatClient& inner_;
  mutable std::mutex mu_;
  std::vector<std::vector<ChatMessage>> calls_;
};

/// Offline default for the CLI: answers frame-analysis prompts with a
/// well-formed five-field JSON object and echoes everything else.
class OfflineChat final : public ChatClient {
 public:
  std::string chat(std::span<const ChatMessage> history) override;
  std::string model_name() const override { return "offline"; }
};

struct SceneWord {
  std::string token;
  Rect rect;
};

/// Ground-truth layout of an image: every word with its pixel rectangle and
/// the region a query is about.
struct SceneGraph {
  std::vector<SceneWord> words;
  Rect target;
};

enum class VisionCompetence {
  Spatial,  // reads exactly the words whose centers fall in the target
  Blind,    // reads every word, ignoring any region
};

/// Vision-model stand-in answering from a scene graph instead of pixels.
class OracleVisionMock final : public ChatClient {
 public:
  OracleVisionMock(SceneGraph scene, VisionCompetence competence)
      : scene_(std::move(scene)), competence_(competence) {}
  std::string chat(std::span<const ChatMessage> history) override;
  std::string model_name() const override;

 private:
  SceneGraph scene_;
  VisionCompetence competence_;
};

/// Canned transcription result or error.
class ScriptedTranscriber final : public Transcriber {
 public:
  explicit ScriptedTranscriber(std::variant<std::string, GatewayError> result)
      : result_(std::move(result)) {}
  std::string transcribe_audio(const AudioTrack& audio) override;

 private:
  std::variant<std::string, GatewayError> result_;
};

/// Transport replaying canned HTTP responses or transport failures; records
/// every request it receives.
class ScriptedTransport final : public HttpTransport {
 public:
  using Step = std::variant<HttpResponse, TransportFailure>;

  explicit ScriptedTransport(std::vector<Step> steps) : steps_(steps.begin(), steps.end()) {}
  HttpResponse post(const HttpRequest& request) override;

  std::vector<HttpRequest> requests() const;

 private:
  mutable std::mutex mu_;
  std::deque<Step> steps_;
  std::vector<HttpRequest> requests_;
};

/// Minimal successful chat-completions body carrying `content`.
std::string chat_completion_body(const std::string& content);

}  // namespace untwist::llm
