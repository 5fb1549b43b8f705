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

#include "untwist/llm/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace untwist::llm {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(GatewayErrc code) {
  switch (code) {
    case GatewayErrc::Timeout: return "timeout";
    case GatewayErrc::AuthFailure: return "auth_failure";
    case GatewayErrc::RateLimited: return "rate_limited";
    case GatewayErrc::ServerError: return "server_error";
    case GatewayErrc::Transport: return "transport";
    case GatewayErrc::InvalidRequest: return "invalid_request";
    case GatewayErrc::MalformedResponse: return "malformed_response";
  }
  return "unknown";
}

void validate_history(std::span<const ChatMessage> history) {
  if (history.empty()) throw std::invalid_argument("chat history is empty");
  if (history.back().role != Role::User)
    throw std::invalid_argument("chat history must end with a user message");
  for (const auto& m : history)
    if (m.role == Role::Assistant && !m.images.empty())
      throw std::invalid_argument("assistant messages cannot carry images");
}

void GatewayConfig::validate() const {
  if (!(timeout_s > 0)) throw std::invalid_argument("gateway timeout_s must be > 0");
  if (max_retries < 0) throw std::invalid_argument("gateway max_retries must be >= 0");
  if (max_in_flight < 1 || max_in_flight > 1024)
    throw std::invalid_argument("gateway max_in_flight must be in [1, 1024]");
  if (base_url.empty()) throw std::invalid_argument("gateway base_url is empty");
}

GatewayConfig with_environment(GatewayConfig config) {
  if (const char* key = std::getenv(kApiKeyEnv); key && *key) config.api_key = key;
  if (const char* url = std::getenv(kBaseUrlEnv); url && *url) config.base_url = url;
  return config;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string build_chat_request(std::span<const ChatMessage> history, const std::string& model,
                               double temperature) {
  json messages = json::array();
  for (const auto& m : history) {
    json entry{{"role", to_string(m.role)}};
    if (m.images.empty()) {
      entry["content"] = m.text;
    } else {
      json parts = json::array();
      parts.push_back({{"type", "text"}, {"text", m.text}});
      for (const auto& img : m.images) {
        parts.push_back(
            {{"type", "image_url"},
             {"image_url",
              {{"url", "data:image/png;base64," + base64_encode(img.png)},
               {"detail", img.detail}}}});
      }
      entry["content"] = std::move(parts);
    }
    messages.push_back(std::move(entry));
  }
  json body{{"model", model}, {"messages", std::move(messages)}, {"temperature", temperature}};
  return body.dump();
}

std::string elide_images(const std::string& request_body) {
  static constexpr std::string_view kMarker = "data:image/";
  std::string out;
  out.reserve(std::min<std::size_t>(request_body.size(), 4096));
  std::size_t pos = 0;
  while (true) {
    const auto hit = request_body.find(kMarker, pos);
    if (hit == std::string::npos) break;
    out.append(request_body, pos, hit - pos);
    auto end = request_body.find('"', hit);
    if (end == std::string::npos) end = request_body.size();
    out += "<image elided: " + std::to_string(end - hit) + " chars>";
    pos = end;
  }
  out.append(request_body, pos);
  return out;
}

std::string parse_chat_response(const std::string& body) {
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw GatewayError(GatewayErrc::MalformedResponse, "chat response is not a JSON object");
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty())
    throw GatewayError(GatewayErrc::MalformedResponse, "chat response has no choices");
  const json& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object())
    throw GatewayError(GatewayErrc::MalformedResponse, "chat choice has no message");
  const json& content = first["message"].value("content", json());
  if (content.is_null()) return "";
  if (!content.is_string())
    throw GatewayError(GatewayErrc::MalformedResponse, "chat message content is not a string");
  return content.get<std::string>();
}

std::string parse_transcription_response(const std::string& body) {
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("text") ||
      !doc["text"].is_string())
    throw GatewayError(GatewayErrc::MalformedResponse, "transcription response lacks text");
  return doc["text"].get<std::string>();
}

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(const GatewayConfig& config) : api_key_(config.api_key) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config.base_url, m, kUrl))
      throw std::invalid_argument("invalid gateway base_url: " + config.base_url);
    origin_ = m[1].str();
    prefix_ = m[2].matched ? m[2].str() : "";
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    timeout_ = std::chrono::milliseconds(static_cast<long long>(config.timeout_s * 1000));
  }

  HttpResponse post(const HttpRequest& request) override {
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto result = client.Post(prefix_ + request.path, headers, request.body, request.content_type);
    if (!result) {
      const auto err = result.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      throw TransportFailure("http transport: " + httplib::to_string(err), timed_out);
    }
    return {result->status, result->body};
  }

 private:
  std::string api_key_;
  std::string origin_;
  std::string prefix_;
  std::chrono::milliseconds timeout_{};
};

std::string multipart_body(const std::string& boundary, const std::string& model,
                           const std::vector<std::uint8_t>& wav) {
  std::string body;
  body += "--" + boundary + "\r\n";
  body += "Content-Disposition: form-data; name=\"model\"\r\n\r\n" + model + "\r\n";
  body += "--" + boundary + "\r\n";
  body += "Content-Disposition: form-data; name=\"response_format\"\r\n\r\njson\r\n";
  body += "--" + boundary + "\r\n";
  body += "Content-Disposition: form-data; name=\"file\"; filename=\"audio.wav\"\r\n";
  body += "Content-Type: audio/wav\r\n\r\n";
  body.append(reinterpret_cast<const char*>(wav.data()), wav.size());
  body += "\r\n--" + boundary + "--\r\n";
  return body;
}

GatewayError classify_status(int status, const std::string& body) {
  const std::string what = "HTTP " + std::to_string(status) + ": " + body.substr(0, 200);
  if (status == 401 || status == 403) return {GatewayErrc::AuthFailure, what, status};
  if (status == 429) return {GatewayErrc::RateLimited, what, status};
  if (status >= 500) return {GatewayErrc::ServerError, what, status};
  return {GatewayErrc::InvalidRequest, what, status};
}

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const GatewayConfig& config) {
  return std::make_unique<HttplibTransport>(config);
}

OpenAiGateway::OpenAiGateway(GatewayConfig config, std::unique_ptr<HttpTransport> transport,
                             Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(sleeper ? std::move(sleeper)
                       : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.max_in_flight, 1, 1024))) {
  config_.validate();
  if (!transport_) throw std::invalid_argument("gateway requires a transport");
}

HttpResponse OpenAiGateway::send_with_retry(const HttpRequest& request,
                                            const std::string& log_body) {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  for (int attempt = 0;; ++attempt) {
    std::optional<GatewayError> failure;
    spdlog::info("gateway -> POST {} {}", request.path, log_body);
    try {
      HttpResponse response = transport_->post(request);
      spdlog::info("gateway <- {} {}", response.status, response.body.substr(0, 2000));
      if (response.status >= 200 && response.status < 300) return response;
      failure = classify_status(response.status, response.body);
    } catch (const TransportFailure& e) {
      spdlog::warn("gateway transport failure: {}", e.what());
      failure = GatewayError(e.timed_out() ? GatewayErrc::Timeout : GatewayErrc::Transport,
                             e.what());
    }
    if (!failure->retryable() || attempt >= config_.max_retries) throw *failure;
    const auto delay = config_.backoff_base * (1LL << std::min(attempt, 20));
    spdlog::warn("gateway retry {}/{} after {} ms ({})", attempt + 1, config_.max_retries,
                 delay.count(), failure->what());
    sleeper_(delay);
  }
}

std::string OpenAiGateway::chat(std::span<const ChatMessage> history) {
  return chat(history, config_.temperature);
}

std::string OpenAiGateway::chat(std::span<const ChatMessage> history, double temperature) {
  validate_history(history);
  HttpRequest request{"/chat/completions", "application/json",
                      build_chat_request(history, config_.chat_model, temperature)};
  const auto response = send_with_retry(request, elide_images(request.body));
  return parse_chat_response(response.body);
}

std::string OpenAiGateway::transcribe_audio(const AudioTrack& audio) {
  if (audio.empty()) throw std::invalid_argument("cannot transcribe empty audio");
  const std::string boundary = "untwist-boundary-7d1f0c9a";
  HttpRequest request{"/audio/transcriptions", "multipart/form-data; boundary=" + boundary,
                      multipart_body(boundary, config_.transcription_model, encode_wav(audio))};
  const auto response = send_with_retry(
      request, fmt::format("<multipart audio: {} samples>", audio.sample_count()));
  return parse_transcription_response(response.body);
}

}  // namespace untwist::llm
