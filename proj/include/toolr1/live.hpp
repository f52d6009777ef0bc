// SPDX-License-Identifier: Apache-2.0
// Network clients for live runs: tool QA service, Wayback lookups and
// chat-completion endpoints. None of these are constructed when
// TOOLR1_OFFLINE=1 is set.
#pragma once

#include "toolr1/tools.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace toolr1 {

struct OfflineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// True when TOOLR1_OFFLINE is set to a non-empty value other than "0".
bool offline_mode();

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // always starts with '/'
};

/// Parses "scheme://host[:port][/path]". Throws std::invalid_argument.
Url parse_url(std::string_view text);

struct HttpResponse {
  int status = 0;
  std::string body;
};

struct HttpOptions {
  std::chrono::seconds timeout{30};
  int retries = 1;
  std::optional<std::string> bearer_token;
};

/// Blocking client bound to one origin. Transport failures become
/// BackendTimeout or BackendFailure after the configured retries.
class HttpClient {
 public:
  HttpClient(Url origin, HttpOptions options);
  ~HttpClient();
  HttpClient(const HttpClient&) = delete;
  HttpClient& operator=(const HttpClient&) = delete;

  std::variant<HttpResponse, ToolError> get(const std::string& path_and_query);
  std::variant<HttpResponse, ToolError> post_json(const std::string& path, const std::string& body);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// --- tool QA service ---

/// Request body: {"tool": name, "arguments": {param: rendered value}, "question_id": id}.
std::string qa_request_body(const std::string& tool, const Kwargs& kwargs, const CallContext& ctx);

/// Accepts {"answer": "..."} or {"error": "..."}.
ToolReply parse_qa_response(const HttpResponse& response);

// --- Wayback availability API ---

/// Reduces "YYYY-MM-DD", "YYYY/MM/DD" or "YYYYMMDD[hhmmss]" to digits; nullopt if malformed.
std::optional<std::string> normalize_wayback_date(std::string_view date);

/// "/wayback/available?url=<escaped>&timestamp=<digits>".
std::string wayback_query_path(std::string_view url, std::string_view timestamp);

/// Returns the closest snapshot URL or a tool error when none is available.
ToolReply parse_wayback_response(const HttpResponse& response, std::string_view requested_url);

struct LiveToolConfig {
  std::string tool_endpoint;      // QA service origin + path prefix
  std::string wayback_endpoint = "https://archive.org";
  std::optional<std::string> api_key;
  HttpOptions http;

  /// Reads TOOLR1_TOOL_ENDPOINT, TOOLR1_TOOL_API_KEY and TOOLR1_WAYBACK_ENDPOINT.
  static LiveToolConfig from_env();
};

/// Serves find_archived_url from the Wayback API and every other tool from the
/// QA service (POST <prefix>/<tool>). Throws OfflineError in offline mode.
class LiveToolBackend final : public ToolBackend {
 public:
  explicit LiveToolBackend(LiveToolConfig config);
  ~LiveToolBackend() override;
  ToolReply call(const ToolSpec& spec, const Kwargs& kwargs, const CallContext& ctx) override;

 private:
  LiveToolConfig config_;
  Url tool_url_;
  Url wayback_url_;
};

// --- chat completions ---

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.6;
  int max_tokens = 2048;
  bool logprobs = false;
  std::vector<std::string> stop;
};

struct ChatReply {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
};

/// OpenAI-compatible /chat/completions request body.
std::string chat_request_body(const ChatRequest& request);

/// Parses choices[0].message.content and, when present, choices[0].logprobs.content.
std::variant<ChatReply, ToolError> parse_chat_response(const HttpResponse& response);

struct ChatConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1
  std::string model;
  std::optional<std::string> api_key;
  HttpOptions http;
};

/// Completion endpoint seen by the remote policy and the LLM judge.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::variant<ChatReply, ToolError> complete(ChatRequest request) = 0;
};

class ChatClient final : public ChatBackend {
 public:
  explicit ChatClient(ChatConfig config);
  ~ChatClient() override;
  std::variant<ChatReply, ToolError> complete(ChatRequest request) override;
  const ChatConfig& config() const { return config_; }

 private:
  ChatConfig config_;
  Url url_;
  std::unique_ptr<HttpClient> http_;
};

}  // namespace toolr1
