// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "toolr1/tools.hpp"

#include <fstream>
#include <sstream>

using namespace toolr1;

namespace {

std::shared_ptr<FixtureBackend> honey_fixtures() {
  return std::make_shared<FixtureBackend>(FixtureTable::from_json_text(R"({
    "entries": [
      {"tool": "wikipedia_qa", "match": {"query": "density of honey and mayonnaise at 25C"},
       "response": "No Wikipedia page found for 'density of honey and mayonnaise at 25C'"},
      {"tool": "web_qa", "question_id": "q2", "response": "second question"},
      {"tool": "web_qa", "match": {"query": "slow"}, "error": "timeout"}
    ],
    "defaults": {"web_qa": "default answer"}
  })"));
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("canonical registry has the seven tools in order") {
  auto reg = ToolRegistry::canonical(nullptr);
  std::vector<std::string> names;
  for (const auto& s : reg.specs()) names.push_back(s.name);
  CHECK(names == std::vector<std::string>{"inspect_file_as_text", "wikipedia_qa", "web_qa", "visit_qa",
                                          "find_archived_url", "local_visualizer", "final_answer"});
  CHECK_THROWS_AS(ToolRegistry({reg.specs()[0], reg.specs()[0]}, nullptr), std::invalid_argument);
}

TEST_CASE("final_answer renders its value without touching the backend") {
  auto backend = honey_fixtures();
  auto reg = ToolRegistry::canonical(backend);
  auto reply = reg.invoke("final_answer", {{"answer", Value(6)}});
  REQUIRE(std::holds_alternative<std::string>(reply));
  CHECK(std::get<std::string>(reply) == "6");
  CHECK(std::get<std::string>(reg.invoke("final_answer", {{"answer", Value(List{1, "a"})}})) == "[1, 'a']");
  CHECK(backend->calls() == 0);
}

TEST_CASE("fixture backend serves the wikipedia failure text") {
  auto reg = ToolRegistry::canonical(honey_fixtures());
  auto reply = reg.invoke("wikipedia_qa", {{"query", Value("density of honey and mayonnaise at 25C")},
                                           {"question", Value("What is the density?")}});
  REQUIRE(std::holds_alternative<std::string>(reply));
  CHECK(std::get<std::string>(reply) == "No Wikipedia page found for 'density of honey and mayonnaise at 25C'");
}

TEST_CASE("fixture matching: question id filter, defaults, errors, first match wins") {
  auto reg = ToolRegistry::canonical(honey_fixtures());
  Kwargs kw{{"query", Value("x")}, {"question", Value("y")}};
  CHECK(std::get<std::string>(reg.invoke("web_qa", kw, {"q1"})) == "default answer");
  CHECK(std::get<std::string>(reg.invoke("web_qa", kw, {"q2"})) == "second question");
  auto slow = reg.invoke("web_qa", {{"query", Value("slow")}, {"question", Value("y")}}, {"q1"});
  REQUIRE(std::holds_alternative<ToolError>(slow));
  CHECK(std::get<ToolError>(slow).kind == ToolErrorKind::BackendTimeout);
  auto none = reg.invoke("visit_qa", {{"url", Value("u")}, {"question", Value("q")}});
  REQUIRE(std::holds_alternative<ToolError>(none));
  CHECK(std::get<ToolError>(none).kind == ToolErrorKind::BackendFailure);
  // Replaying the same calls gives the same replies.
  for (int i = 0; i < 3; ++i) CHECK(std::get<std::string>(reg.invoke("web_qa", kw, {"q2"})) == "second question");
}

TEST_CASE("argument validation") {
  auto reg = ToolRegistry::canonical(honey_fixtures());
  auto kind = [&](const std::string& tool, const Kwargs& kw) {
    auto r = reg.invoke(tool, kw);
    REQUIRE(std::holds_alternative<ToolError>(r));
    return std::get<ToolError>(r).kind;
  };
  CHECK(kind("web_qa", {{"query", Value("x")}}) == ToolErrorKind::MissingArgument);
  CHECK(kind("search", {}) == ToolErrorKind::UnknownTool);
  CHECK(kind("web_qa", {{"query", Value("x")}, {"question", Value("y")}, {"lang", Value("en")}}) ==
        ToolErrorKind::InvalidArgument);
  CHECK(kind("web_qa", {{"query", Value(3)}, {"question", Value("y")}}) == ToolErrorKind::InvalidArgument);
  CHECK(kind("web_qa", {{"query", Value("x")}, {"query", Value("x")}, {"question", Value("y")}}) ==
        ToolErrorKind::InvalidArgument);
  CHECK(kind("final_answer", {}) == ToolErrorKind::MissingArgument);
  // The optional question of inspect_file_as_text may be left out.
  auto backend = std::make_shared<FixtureBackend>(FixtureTable::from_json_text(
      R"({"defaults": {"inspect_file_as_text": "file body"}})"));
  auto reg2 = ToolRegistry::canonical(backend);
  CHECK(std::get<std::string>(reg2.invoke("inspect_file_as_text", {{"file_path", Value("a.txt")}})) == "file body");
  CHECK(ToolError{ToolErrorKind::BackendFailure, "boom"}.describe() == "BackendFailure: boom");
}

TEST_CASE("final_answer is terminal within an episode") {
  auto reg = ToolRegistry::canonical(honey_fixtures());
  EpisodeTools tools(reg, {"q1"});
  CHECK(tools.has_tool("web_qa"));
  CHECK_FALSE(tools.has_tool("print"));
  auto first = tools.invoke("web_qa", {{"query", Value("x")}, {"question", Value("y")}});
  CHECK(std::holds_alternative<std::string>(first.result));
  auto bad = tools.invoke("final_answer", {});
  CHECK(std::holds_alternative<ExecError>(bad.result));
  CHECK_FALSE(tools.terminated());
  auto fin = tools.invoke("final_answer", {{"answer", Value(6)}});
  REQUIRE(fin.final_value.has_value());
  CHECK(*fin.final_value == Value(6));
  CHECK(tools.terminated());
  for (const char* name : {"web_qa", "final_answer"}) {
    auto after = tools.invoke(name, {{"answer", Value(7)}});
    REQUIRE(std::holds_alternative<ExecError>(after.result));
    CHECK(std::get<ExecError>(after.result).kind == ExecErrorKind::ToolError);
    CHECK(std::get<ExecError>(after.result).message.find("Terminated") == 0);
  }
  CHECK(*tools.answer() == Value(6));
}

TEST_CASE("render_tool_docs") {
  CHECK(render_tool_docs(ToolRegistry()).empty());

  auto specs = canonical_tool_specs();
  ToolRegistry only_final({specs.back()}, nullptr);
  auto one = render_tool_docs(only_final);
  CHECK(count(one, "- final_answer:") == 1);
  CHECK(one.find("formally submits the final solution") != std::string::npos);
  CHECK(one.find("Takes inputs: {\"answer\":") != std::string::npos);

  auto all = render_tool_docs(ToolRegistry::canonical(nullptr));
  std::size_t last = 0;
  for (const auto& s : specs) {
    auto pos = all.find("- " + s.name + ":");
    REQUIRE(pos != std::string::npos);
    CHECK(pos >= last);
    last = pos;
  }
  CHECK(count(all, "Returns an output of type:") == 7);
}

TEST_CASE("system prompt rendering fills both slots") {
  auto reg = ToolRegistry::canonical(nullptr);
  auto text = render_system_prompt(default_system_prompt_template(), reg, {"math", "statistics"});
  CHECK(text.find("{tool_docs}") == std::string::npos);
  CHECK(text.find("{authorized_imports}") == std::string::npos);
  CHECK(text.find(render_tool_docs(reg)) != std::string::npos);
  CHECK(text.find("math") != std::string::npos);
}

TEST_CASE("shipped prompt files match the built-in defaults") {
  CHECK(slurp(TOOLR1_SOURCE_DIR "/prompts/system_prompt.txt") == default_system_prompt_template());
}
