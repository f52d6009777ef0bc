// SPDX-License-Identifier: Apache-2.0
#include "toolr1/live.hpp"

#ifdef TOOLR1_WITH_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <fmt/format.h>
#include <json.hpp>

#include <cctype>
#include <cstdlib>

namespace toolr1 {

bool offline_mode() {
  const char* v = std::getenv("TOOLR1_OFFLINE");
  return v && *v && std::string_view(v) != "0";
}

namespace {

void require_online(std::string_view what) {
  if (offline_mode()) throw OfflineError(fmt::format("{} is unavailable: TOOLR1_OFFLINE is set", what));
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::string join_path(const std::string& prefix, std::string_view tail) {
  std::string out = prefix;
  if (!out.empty() && out.back() == '/') out.pop_back();
  if (tail.empty() || tail.front() != '/') out += '/';
  out += tail;
  return out;
}

}  // namespace

Url parse_url(std::string_view text) {
  Url url;
  auto sep = text.find("://");
  if (sep == std::string_view::npos) throw std::invalid_argument(fmt::format("URL without scheme: '{}'", text));
  url.scheme = std::string(text.substr(0, sep));
  if (url.scheme != "http" && url.scheme != "https")
    throw std::invalid_argument(fmt::format("unsupported URL scheme '{}'", url.scheme));
  std::string_view rest = text.substr(sep + 3);
  auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  url.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  auto colon = authority.rfind(':');
  if (colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
    url.host = std::string(authority.substr(0, colon));
    std::string port(authority.substr(colon + 1));
    if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5)
      throw std::invalid_argument(fmt::format("bad port in '{}'", text));
    url.port = std::stoi(port);
  } else {
    url.host = std::string(authority);
    url.port = url.scheme == "https" ? 443 : 80;
  }
  if (url.host.empty()) throw std::invalid_argument(fmt::format("URL without host: '{}'", text));
  return url;
}

struct HttpClient::Impl {
  Url origin;
  HttpOptions options;

  template <typename Fn>
  std::variant<HttpResponse, ToolError> with_retries(Fn&& send) {
    ToolError last{ToolErrorKind::BackendFailure, "no attempt made"};
    for (int attempt = 0; attempt <= options.retries; ++attempt) {
      std::unique_ptr<httplib::ClientImpl> client;
      if (origin.scheme == "https") {
#ifdef TOOLR1_WITH_TLS
        client = std::make_unique<httplib::SSLClient>(origin.host, origin.port);
#else
        return ToolError{ToolErrorKind::BackendFailure, "built without TLS support"};
#endif
      } else {
        client = std::make_unique<httplib::ClientImpl>(origin.host, origin.port);
      }
      client->set_connection_timeout(options.timeout);
      client->set_read_timeout(options.timeout);
      client->set_write_timeout(options.timeout);
      if (options.bearer_token) client->set_bearer_token_auth(*options.bearer_token);
      httplib::Result res = send(*client);
      if (res) {
        if (res->status >= 500 && attempt < options.retries) {
          last = {ToolErrorKind::BackendFailure, fmt::format("HTTP {}", res->status)};
          continue;
        }
        return HttpResponse{res->status, res->body};
      }
      auto err = res.error();
      bool timeout = err == httplib::Error::Read || err == httplib::Error::Write ||
                     err == httplib::Error::ConnectionTimeout;
      last = {timeout ? ToolErrorKind::BackendTimeout : ToolErrorKind::BackendFailure,
              fmt::format("{}://{}:{}: {}", origin.scheme, origin.host, origin.port, httplib::to_string(err))};
    }
    return last;
  }
};

HttpClient::HttpClient(Url origin, HttpOptions options) : impl_(std::make_unique<Impl>()) {
  require_online("HTTP client");
  impl_->origin = std::move(origin);
  impl_->options = std::move(options);
}

HttpClient::~HttpClient() = default;

std::variant<HttpResponse, ToolError> HttpClient::get(const std::string& path_and_query) {
  return impl_->with_retries([&](httplib::ClientImpl& c) { return c.Get(path_and_query); });
}

std::variant<HttpResponse, ToolError> HttpClient::post_json(const std::string& path, const std::string& body) {
  return impl_->with_retries([&](httplib::ClientImpl& c) { return c.Post(path, body, "application/json"); });
}

std::string qa_request_body(const std::string& tool, const Kwargs& kwargs, const CallContext& ctx) {
  nlohmann::ordered_json args = nlohmann::ordered_json::object();
  for (const auto& [k, v] : kwargs) args[k] = render_value(v);
  nlohmann::ordered_json body = {{"tool", tool}, {"arguments", args}};
  if (!ctx.question_id.empty()) body["question_id"] = ctx.question_id;
  return body.dump();
}

ToolReply parse_qa_response(const HttpResponse& response) {
  if (response.status < 200 || response.status >= 300)
    return ToolError{ToolErrorKind::BackendFailure, fmt::format("HTTP {}", response.status)};
  auto doc = nlohmann::json::parse(response.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    return ToolError{ToolErrorKind::BackendFailure, "malformed response from tool service"};
  if (auto it = doc.find("error"); it != doc.end() && !it->is_null())
    return ToolError{ToolErrorKind::BackendFailure, it->is_string() ? it->get<std::string>() : it->dump()};
  auto it = doc.find("answer");
  if (it == doc.end() || !it->is_string())
    return ToolError{ToolErrorKind::BackendFailure, "tool service response lacks an 'answer' string"};
  return it->get<std::string>();
}

std::optional<std::string> normalize_wayback_date(std::string_view date) {
  std::string digits;
  for (char c : date) {
    if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
    else if (c != '-' && c != '/' && c != ' ' && c != ':' && c != 'T') return std::nullopt;
  }
  if (digits.size() != 8 && digits.size() != 12 && digits.size() != 14) return std::nullopt;
  int month = std::stoi(digits.substr(4, 2)), day = std::stoi(digits.substr(6, 2));
  if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
  return digits;
}

std::string wayback_query_path(std::string_view url, std::string_view timestamp) {
  std::string escaped;
  for (unsigned char c : url) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') escaped.push_back(static_cast<char>(c));
    else escaped += fmt::format("%{:02X}", c);
  }
  return fmt::format("/wayback/available?url={}&timestamp={}", escaped, timestamp);
}

ToolReply parse_wayback_response(const HttpResponse& response, std::string_view requested_url) {
  if (response.status < 200 || response.status >= 300)
    return ToolError{ToolErrorKind::BackendFailure, fmt::format("HTTP {}", response.status)};
  auto doc = nlohmann::json::parse(response.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    return ToolError{ToolErrorKind::BackendFailure, "malformed response from archive service"};
  const auto snapshots = doc.value("archived_snapshots", nlohmann::json::object());
  const auto closest = snapshots.value("closest", nlohmann::json::object());
  if (closest.value("available", false) && closest.contains("url") && closest["url"].is_string())
    return closest["url"].get<std::string>();
  return ToolError{ToolErrorKind::BackendFailure, fmt::format("no archived version found for {}", requested_url)};
}

LiveToolConfig LiveToolConfig::from_env() {
  LiveToolConfig cfg;
  cfg.tool_endpoint = env("TOOLR1_TOOL_ENDPOINT").value_or("");
  if (auto w = env("TOOLR1_WAYBACK_ENDPOINT")) cfg.wayback_endpoint = *w;
  cfg.api_key = env("TOOLR1_TOOL_API_KEY");
  return cfg;
}

LiveToolBackend::LiveToolBackend(LiveToolConfig config) : config_(std::move(config)) {
  require_online("live tool backend");
  if (config_.tool_endpoint.empty()) throw std::invalid_argument("live tool backend needs TOOLR1_TOOL_ENDPOINT");
  tool_url_ = parse_url(config_.tool_endpoint);
  wayback_url_ = parse_url(config_.wayback_endpoint);
}

LiveToolBackend::~LiveToolBackend() = default;

ToolReply LiveToolBackend::call(const ToolSpec& spec, const Kwargs& kwargs, const CallContext& ctx) {
  auto arg = [&](std::string_view name) -> std::string {
    for (const auto& [k, v] : kwargs)
      if (k == name) return render_value(v);
    return {};
  };
  if (spec.name == "find_archived_url") {
    auto ts = normalize_wayback_date(arg("date"));
    if (!ts) return ToolError{ToolErrorKind::InvalidArgument, fmt::format("unrecognized date '{}'", arg("date"))};
    HttpOptions opts = config_.http;
    opts.bearer_token.reset();
    HttpClient client(wayback_url_, opts);
    auto res = client.get(join_path(wayback_url_.path == "/" ? "" : wayback_url_.path, wayback_query_path(arg("url"), *ts)));
    if (auto* err = std::get_if<ToolError>(&res)) return *err;
    return parse_wayback_response(std::get<HttpResponse>(res), arg("url"));
  }
  HttpOptions opts = config_.http;
  opts.bearer_token = config_.api_key;
  HttpClient client(tool_url_, opts);
  auto res = client.post_json(join_path(tool_url_.path, spec.name), qa_request_body(spec.name, kwargs, ctx));
  if (auto* err = std::get_if<ToolError>(&res)) return *err;
  return parse_qa_response(std::get<HttpResponse>(res));
}

std::string chat_request_body(const ChatRequest& request) {
  nlohmann::ordered_json messages = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::ordered_json body = {{"model", request.model},
                                 {"messages", messages},
                                 {"temperature", request.temperature},
                                 {"max_tokens", request.max_tokens}};
  if (request.logprobs) body["logprobs"] = true;
  if (!request.stop.empty()) body["stop"] = request.stop;
  return body.dump();
}

std::variant<ChatReply, ToolError> parse_chat_response(const HttpResponse& response) {
  if (response.status < 200 || response.status >= 300)
    return ToolError{ToolErrorKind::BackendFailure, fmt::format("HTTP {}", response.status)};
  auto doc = nlohmann::json::parse(response.body, nullptr, false);
  if (doc.is_discarded()) return ToolError{ToolErrorKind::BackendFailure, "malformed chat completion response"};
  try {
    const auto& choice = doc.at("choices").at(0);
    ChatReply reply;
    const auto& content = choice.at("message").at("content");
    reply.text = content.is_null() ? "" : content.get<std::string>();
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object() && lp->contains("content")) {
      for (const auto& t : lp->at("content")) {
        reply.tokens.push_back(t.at("token").get<std::string>());
        reply.logprobs.push_back(t.at("logprob").get<double>());
      }
    }
    return reply;
  } catch (const nlohmann::json::exception& e) {
    return ToolError{ToolErrorKind::BackendFailure, fmt::format("unexpected chat completion shape: {}", e.what())};
  }
}

ChatClient::ChatClient(ChatConfig config) : config_(std::move(config)) {
  require_online("chat client");
  url_ = parse_url(config_.endpoint);
  HttpOptions opts = config_.http;
  opts.bearer_token = config_.api_key;
  http_ = std::make_unique<HttpClient>(url_, opts);
}

ChatClient::~ChatClient() = default;

std::variant<ChatReply, ToolError> ChatClient::complete(ChatRequest request) {
  if (request.model.empty()) request.model = config_.model;
  auto res = http_->post_json(join_path(url_.path == "/" ? "" : url_.path, "chat/completions"),
                              chat_request_body(request));
  if (auto* err = std::get_if<ToolError>(&res)) return *err;
  return parse_chat_response(std::get<HttpResponse>(res));
}

}  // namespace toolr1
