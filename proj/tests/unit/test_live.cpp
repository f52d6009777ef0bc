// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "toolr1/live.hpp"

#include <json.hpp>

using namespace toolr1;

TEST_CASE("parse_url") {
  auto u = parse_url("https://example.org:8443/v1/tools");
  CHECK(u.scheme == "https");
  CHECK(u.host == "example.org");
  CHECK(u.port == 8443);
  CHECK(u.path == "/v1/tools");
  auto d = parse_url("http://localhost");
  CHECK(d.port == 80);
  CHECK(d.path == "/");
  CHECK(parse_url("https://a.b").port == 443);
  CHECK_THROWS_AS(parse_url("localhost:80"), std::invalid_argument);
  CHECK_THROWS_AS(parse_url("ftp://x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_url("http://:80/"), std::invalid_argument);
  CHECK_THROWS_AS(parse_url("http://x:port/"), std::invalid_argument);
}

TEST_CASE("tool QA request and response") {
  auto body = nlohmann::json::parse(qa_request_body("web_qa", {{"query", Value("x")}, {"question", Value(3)}}, {"q7"}));
  CHECK(body["tool"] == "web_qa");
  CHECK(body["arguments"]["query"] == "x");
  CHECK(body["arguments"]["question"] == "3");
  CHECK(body["question_id"] == "q7");

  CHECK(std::get<std::string>(parse_qa_response({200, R"({"answer": "42"})"})) == "42");
  CHECK(std::get<ToolError>(parse_qa_response({200, R"({"error": "no page"})"})).message == "no page");
  CHECK(std::get<ToolError>(parse_qa_response({503, ""})).message == "HTTP 503");
  CHECK(std::holds_alternative<ToolError>(parse_qa_response({200, "not json"})));
  CHECK(std::holds_alternative<ToolError>(parse_qa_response({200, R"({"answer": 3})"})));
}

TEST_CASE("wayback helpers") {
  CHECK(normalize_wayback_date("2023-03-15") == std::optional<std::string>("20230315"));
  CHECK(normalize_wayback_date("2023/03/15") == std::optional<std::string>("20230315"));
  CHECK(normalize_wayback_date("20230315120000") == std::optional<std::string>("20230315120000"));
  CHECK_FALSE(normalize_wayback_date("March 2023"));
  CHECK_FALSE(normalize_wayback_date("2023-13-01"));
  CHECK_FALSE(normalize_wayback_date("2023"));
  CHECK(wayback_query_path("https://a.org/x?y=1", "20230315") ==
        "/wayback/available?url=https%3A%2F%2Fa.org%2Fx%3Fy%3D1&timestamp=20230315");

  auto hit = parse_wayback_response(
      {200, R"({"archived_snapshots":{"closest":{"available":true,"url":"http://web.archive.org/web/2023/x"}}})"}, "x");
  CHECK(std::get<std::string>(hit) == "http://web.archive.org/web/2023/x");
  auto miss = parse_wayback_response({200, R"({"archived_snapshots":{}})"}, "x");
  CHECK(std::get<ToolError>(miss).message == "no archived version found for x");
}

TEST_CASE("chat request and response") {
  ChatRequest req;
  req.model = "m";
  req.messages = {{"system", "s"}, {"user", "u"}};
  req.logprobs = true;
  req.stop = {"\nObservation:"};
  auto body = nlohmann::json::parse(chat_request_body(req));
  CHECK(body["model"] == "m");
  CHECK(body["messages"].size() == 2);
  CHECK(body["messages"][1]["content"] == "u");
  CHECK(body["temperature"] == 0.6);
  CHECK(body["max_tokens"] == 2048);
  CHECK(body["logprobs"] == true);
  CHECK(body["stop"][0] == "\nObservation:");

  auto reply = parse_chat_response(
      {200, R"({"choices":[{"message":{"content":"hi there"},
                "logprobs":{"content":[{"token":"hi","logprob":-0.5},{"token":" there","logprob":-1.25}]}}]})"});
  auto& r = std::get<ChatReply>(reply);
  CHECK(r.text == "hi there");
  CHECK(r.tokens == std::vector<std::string>{"hi", " there"});
  CHECK(r.logprobs == std::vector<double>{-0.5, -1.25});
  CHECK(std::holds_alternative<ToolError>(parse_chat_response({200, R"({"choices":[]})"})));
  CHECK(std::holds_alternative<ToolError>(parse_chat_response({401, "{}"})));
}

TEST_CASE("live clients refuse to start offline") {
  REQUIRE(offline_mode());
  LiveToolConfig tools;
  tools.tool_endpoint = "http://localhost:1";
  CHECK_THROWS_AS(LiveToolBackend{tools}, OfflineError);
  ChatConfig chat;
  chat.endpoint = "http://localhost:1/v1";
  CHECK_THROWS_AS(ChatClient{chat}, OfflineError);
}
