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

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "untwist/audio.hpp"

namespace untwist::llm {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);

struct ImageAttachment {
  std::vector<std::uint8_t> png;
  std::string detail = "auto";
};

struct ChatMessage {
  Role role = Role::User;
  std::string text;
  std::vector<ImageAttachment> images;  // never set on assistant messages

  static ChatMessage system(std::string text) { return {Role::System, std::move(text), {}}; }
  static ChatMessage user(std::string text, std::vector<ImageAttachment> images = {}) {
    return {Role::User, std::move(text), std::move(images)};
  }
  static ChatMessage assistant(std::string text) {
    return {Role::Assistant, std::move(text), {}};
  }
};

enum class GatewayErrc {
  Timeout,
  AuthFailure,
  RateLimited,
  ServerError,
  Transport,
  InvalidRequest,
  MalformedResponse,
};

std::string_view to_string(GatewayErrc code);

class GatewayError : public std::runtime_error {
 public:
  GatewayError(GatewayErrc code, const std::string& what, int http_status = 0)
      : std::runtime_error(what), code_(code), http_status_(http_status) {}

  GatewayErrc code() const { return code_; }
  int http_status() const { return http_status_; }
  bool retryable() const {
    return code_ == GatewayErrc::Timeout || code_ == GatewayErrc::RateLimited ||
           code_ == GatewayErrc::ServerError || code_ == GatewayErrc::Transport;
  }

 private:
  GatewayErrc code_;
  int http_status_;
};

/// Anything that can answer a chat history with assistant text.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// `history` is non-empty and ends with a user message.
  virtual std::string chat(std::span<const ChatMessage> history) = 0;
  virtual std::string model_name() const { return "unknown"; }
};

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::string transcribe_audio(const AudioTrack& audio) = 0;
};

/// Throws std::invalid_argument unless `history` is non-empty, ends with a
/// user turn, and no assistant turn carries images.
void validate_history(std::span<const ChatMessage> history);

struct GatewayConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string chat_model = "gpt-4o";
  std::string transcription_model = "whisper-1";
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.7;
  std::chrono::milliseconds backoff_base{1000};
  std::size_t max_in_flight = 8;

  void validate() const;  // throws std::invalid_argument
};

inline constexpr const char* kApiKeyEnv = "UNTWIST_API_KEY";
inline constexpr const char* kBaseUrlEnv = "UNTWIST_BASE_URL";

/// Overlays UNTWIST_API_KEY / UNTWIST_BASE_URL from the process environment.
GatewayConfig with_environment(GatewayConfig config);

struct HttpRequest {
  std::string path;  // appended to base_url, e.g. "/chat/completions"
  std::string content_type;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Thrown by transports when no HTTP response was obtained.
class TransportFailure : public std::runtime_error {
 public:
  TransportFailure(const std::string& what, bool timed_out)
      : std::runtime_error(what), timed_out_(timed_out) {}
  bool timed_out() const { return timed_out_; }

 private:
  bool timed_out_;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport; bearer auth, per-request timeout.
std::unique_ptr<HttpTransport> make_http_transport(const GatewayConfig& config);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// OpenAI-compatible chat-completions and audio-transcriptions client.
///
/// Transient failures (transport errors, timeouts, 5xx, 429) are retried with
/// exponential backoff (base * 2^attempt) up to `max_retries` times. 401/403
/// and other 4xx responses fail immediately. Every exchange is logged with
/// image payloads elided. The handle is shareable across threads; at most
/// `max_in_flight` requests are outstanding at once.
class OpenAiGateway final : public ChatClient, public Transcriber {
 public:
  OpenAiGateway(GatewayConfig config, std::unique_ptr<HttpTransport> transport,
                Sleeper sleeper = {});

  std::string chat(std::span<const ChatMessage> history) override;
  std::string chat(std::span<const ChatMessage> history, double temperature);
  std::string transcribe_audio(const AudioTrack& audio) override;
  std::string model_name() const override { return config_.chat_model; }

  const GatewayConfig& config() const { return config_; }

 private:
  HttpResponse send_with_retry(const HttpRequest& request, const std::string& log_body);

  GatewayConfig config_;
  std::unique_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> in_flight_;
};

/// Chat-completions request body; images become base64 PNG data URLs.
std::string build_chat_request(std::span<const ChatMessage> history, const std::string& model,
                               double temperature);
/// Same body with every data URL replaced by a short placeholder.
std::string elide_images(const std::string& request_body);
/// First choice's message content. Throws GatewayError(MalformedResponse).
std::string parse_chat_response(const std::string& body);
/// `text` field of a transcription response. Throws GatewayError(MalformedResponse).
std::string parse_transcription_response(const std::string& body);

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Pins a temperature for every call made through it.
class TemperatureChat final : public ChatClient {
 public:
  TemperatureChat(OpenAiGateway& gateway, double temperature)
      : gateway_(gateway), temperature_(temperature) {}
  std::string chat(std::span<const ChatMessage> history) override {
    return gateway_.chat(history, temperature_);
  }
  std::string model_name() const override { return gateway_.model_name(); }

 private:
  OpenAiGateway& gateway_;
  double temperature_;
};

}  // namespace untwist::llm
