// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "toolr1/interpreter.hpp"

#include <random>

using namespace toolr1;

namespace {

struct Run {
  std::optional<SyntaxError> syntax;
  ExecOutcome out;
};

Run run(std::string_view code, Namespace* ns = nullptr, ToolHost* host = nullptr, ExecLimits limits = {}) {
  Namespace local;
  NullToolHost null_host;
  auto r = run_code(code, ns ? *ns : local, host ? *host : null_host, limits);
  return {r.syntax_error, std::move(r.outcome)};
}

std::string stdout_of(std::string_view code) {
  auto r = run(code);
  REQUIRE_MESSAGE(!r.syntax, (r.syntax ? r.syntax->describe() : ""));
  REQUIRE_MESSAGE(r.out.ok(), r.out.error->message);
  return r.out.stdout_text;
}

ExecErrorKind error_of(std::string_view code) {
  auto r = run(code);
  REQUIRE(!r.syntax);
  REQUIRE(r.out.error.has_value());
  return r.out.error->kind;
}

bool syntax_error(std::string_view code) { return parse_program(code).index() == 1; }

class RecordingHost final : public ToolHost {
 public:
  bool has_tool(std::string_view name) const override {
    return name == "web_qa" || name == "final_answer" || name == "math_tool";
  }
  ToolResult invoke(const std::string& name, const Kwargs& kwargs) override {
    calls.push_back(name);
    if (name == "final_answer") {
      if (done) return {ExecError{ExecErrorKind::ToolError, "Terminated"}, {}};
      done = true;
      return {render_value(kwargs.at(0).second), kwargs.at(0).second};
    }
    if (!has_tool(name)) return {ExecError{ExecErrorKind::ToolError, "UnknownTool: " + name}, {}};
    return {std::string("answer to ") + render_value(kwargs.at(0).second), {}};
  }
  std::vector<std::string> calls;
  bool done = false;
};

}  // namespace

TEST_CASE("trace arithmetic oracles") {
  CHECK(stdout_of("weight = 3785.41 * 1.420\nprint(weight / 1000)") == "5.3752822\n");
  CHECK(stdout_of("import statistics\nprint(statistics.pstdev([24,74,28,54,73,33,64,73,60,53,59,40,65,76,48,34,62,"
                  "70,31,24,51,55,78,76,41,77,51]))") == "17.271812316195167\n");
  CHECK(stdout_of("print(round(363104 * (2.0167/42.195) / 1000))") == "17\n");
  CHECK(stdout_of("print((5.375 - 3.445) / 0.336)") == "5.7440476190476195\n");
}

// Expected outputs frozen from a CPython 3.10 run of the same programs.
TEST_CASE("python-compatible evaluation corpus") {
  const std::pair<const char*, const char*> corpus[] = {
      {"print(7 // 2, -7 // 2, 7 % -3, -7 % 3, 7.5 // 2, -7.5 % 2)", "3 -4 -2 2 3.0 0.5\n"},
      {"print(1 / 3, 2 ** 10, 2 ** -1, 2.0 ** 0.5)", "0.3333333333333333 1024 0.5 1.4142135623730951\n"},
      {"print(0.1 + 0.2, 1e16, 1e-5, 123456789.0 * 1000)", "0.30000000000000004 1e+16 1e-05 123456789000.0\n"},
      {"print(round(2.5), round(3.5), round(-2.5), round(2.675, 2), round(1234.5678, -2), round(15, -1), "
       "round(25, -1))",
       "2 4 -2 2.67 1200.0 20 20\n"},
      {"print(int('  -42 '), int(3.9), int(-3.9), float('1_000.5'), float(' 2e3 '), int(True))",
       "-42 3 -3 1000.5 2000.0 1\n"},
      {"print(abs(-3), abs(-2.5), min([3, 1, 2]), max(4, 9.5, 2), sum([1, 2, 3.5]), sum([1, 2], 10))",
       "3 2.5 1 9.5 6.5 13\n"},
      {"print(len('h\xc3\xa9llo'), len([1, [2, 3]]), str(5.0), str([1, 'a']))", "5 2 5.0 [1, 'a']\n"},
      {"print(1 < 2 < 3, 1 < 3 < 2, 2 == 2.0, 'a' < 'b', [1, 2] < [1, 3], True + True)",
       "True False True True True 2\n"},
      {"print('a' + 'b', 'ab' * 3, [1] * 3, [1, 2] + [3])", "ab ababab [1, 1, 1] [1, 2, 3]\n"},
      {"x = 3.14159\nprint(f'{x:.2f} and {x} and {{x}}')", "3.14 and 3.14159 and {x}\n"},
      {"import math\nprint(math.sqrt(2), math.floor(-2.5), math.ceil(2.1), math.pi)",
       "1.4142135623730951 -3 3 3.141592653589793\n"},
      {"import statistics\nprint(statistics.mean([1, 2, 3, 4]), statistics.mean([1, 2]), "
       "statistics.mean([0.1, 0.2, 0.3]), statistics.stdev([1.5, 2.5, 2.5, 2.75, 3.25, 4.75]))",
       "2.5 1.5 0.2 1.0810874155219827\n"},
      {"print(1, 2, sep=', ', end='!\\n')", "1, 2!\n"},
      {"print(-(-3), +True, -0.0, 10 / 4, 9007199254740993 / 1)", "3 1 -0.0 2.5 9007199254740992.0\n"},
      {"print(round(0.5), round(1.5), round(2.5, 0), round(-0.0001, 2))", "0 2 2.0 -0.0\n"},
      {"print(3 * 1.1, 1e308 * 10, -1e308 * 10)", "3.3000000000000003 inf -inf\n"},
      {"print(5 // 0.3, 5 % 0.3, -5 // 0.3)", "16.0 0.20000000000000018 -17.0\n"},
      {"print(2 ** 62, (-2) ** 63)", "4611686018427387904 -9223372036854775808\n"},
  };
  for (const auto& [code, expected] : corpus) {
    INFO(code);
    CHECK(stdout_of(code) == expected);
  }
}

TEST_CASE("grammar boundaries") {
  CHECK_FALSE(syntax_error("a, b = 1, 2"));
  CHECK_FALSE(syntax_error("import os"));
  CHECK_FALSE(syntax_error("x = [1,\n  2,\n  3]  # comment\ny = x; z = 1"));
  CHECK_FALSE(syntax_error("total = 1 + \\\n  2"));
  CHECK(syntax_error("for i in range(3): pass"));
  CHECK(syntax_error("if x:\n  y = 1"));
  CHECK(syntax_error("def f(): return 1"));
  CHECK(syntax_error("x = a[0]"));
  CHECK(syntax_error("x += 1"));
  CHECK(syntax_error("x = {'a': 1}"));
  CHECK(syntax_error("  x = 1"));
  CHECK(syntax_error("x = (1, 2)"));
  CHECK(syntax_error("print('unterminated)"));
  CHECK(syntax_error("x.y.z()"));
  CHECK(syntax_error("lambda x: x"));
  auto err = std::get<SyntaxError>(parse_program("x = 1\ny = = 2"));
  CHECK(err.line == 2);
}

TEST_CASE("unbound names, imports and calls") {
  auto r = run("x = undefined + 1");
  REQUIRE(r.out.error);
  CHECK(r.out.error->kind == ExecErrorKind::NameError);
  CHECK(r.out.error->message.find("undefined") != std::string::npos);

  CHECK(error_of("import os") == ExecErrorKind::ImportError);
  CHECK(error_of("math.sqrt(4)") == ExecErrorKind::NameError);
  CHECK(error_of("print(1 / 0)") == ExecErrorKind::TypeError);
  CHECK(error_of("x = 1\nx()") == ExecErrorKind::TypeError);
  CHECK(error_of("y = print") == ExecErrorKind::TypeError);
  CHECK(error_of("print('a' - 1)") == ExecErrorKind::TypeError);
  CHECK(error_of("print(abs())") == ExecErrorKind::ArityError);
  CHECK(error_of("print(len(1, 2))") == ExecErrorKind::ArityError);
  CHECK(error_of("import math\nmath.tan(1)") == ExecErrorKind::NameError);
  CHECK(error_of("x = 9223372036854775807 + 1") == ExecErrorKind::LimitExceeded);
  CHECK(error_of("open('f')") == ExecErrorKind::ToolError);
}

TEST_CASE("output before an error is retained") {
  auto r = run("print('a')\nprint(b)\nprint('c')");
  CHECK(r.out.stdout_text == "a\n");
  CHECK(r.out.error->kind == ExecErrorKind::NameError);
}

TEST_CASE("bare expressions echo non-None values") {
  CHECK(stdout_of("1 + 1") == "2\n");
  CHECK(stdout_of("'text'") == "text\n");
  CHECK(stdout_of("['a', 1]") == "['a', 1]\n");
  CHECK(stdout_of("print('x')") == "x\n");
  CHECK(stdout_of("None") == "");
}

TEST_CASE("limits") {
  ExecLimits limits;
  limits.max_statements = 3;
  auto r = run("a = 1\nb = 2\nc = 3\nd = 4", nullptr, nullptr, limits);
  CHECK(r.out.error->kind == ExecErrorKind::LimitExceeded);

  auto big = run("print('x' * 5000)");
  CHECK(big.out.error->kind == ExecErrorKind::LimitExceeded);
  CHECK(big.out.stdout_text.size() == 4096 + std::string("...[truncated]").size());
  CHECK(big.out.stdout_text.ends_with("...[truncated]"));

  CHECK(error_of("x = [0] * 10001") == ExecErrorKind::LimitExceeded);
  CHECK_FALSE(run("x = [0] * 10000").out.error);
}

TEST_CASE("namespace persists across blocks") {
  Namespace ns;
  CHECK(run("x = 2", &ns).out.ok());
  auto r = run("print(x * 3)", &ns);
  CHECK(r.out.stdout_text == "6\n");
}

TEST_CASE("persistence property: split blocks equal one block") {
  std::mt19937 rng(5);
  const char* names[] = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> stmts;
    std::vector<std::string> bound = {"a"};
    stmts.push_back("a = 1");
    int n = 2 + rng() % 10;
    for (int i = 0; i < n; ++i) {
      std::string lhs = names[rng() % 4];
      std::string x = bound[rng() % bound.size()], y = bound[rng() % bound.size()];
      const char* ops[] = {"+", "-", "*", "/", "//", "%"};
      std::string op = ops[rng() % 6];
      if (op == "/" || op == "//" || op == "%") y = "(abs(" + y + ") + 1)";
      stmts.push_back(lhs + " = round(" + x + " " + op + " " + y + ", 3)");
      if (std::find(bound.begin(), bound.end(), lhs) == bound.end()) bound.push_back(lhs);
    }
    std::string whole;
    for (auto& s : stmts) whole += s + "\n";
    Namespace one, split;
    NullToolHost host;
    auto r1 = run_code(whole, one, host, {});
    REQUIRE(r1.outcome.ok());
    std::size_t cut = 1 + rng() % (stmts.size() - 1);
    std::string first, second;
    for (std::size_t i = 0; i < stmts.size(); ++i) (i < cut ? first : second) += stmts[i] + "\n";
    REQUIRE(run_code(first, split, host, {}).outcome.ok());
    REQUIRE(run_code(second, split, host, {}).outcome.ok());
    CHECK(one.bindings == split.bindings);
  }
}

TEST_CASE("tool dispatch") {
  RecordingHost host;
  Namespace ns;
  auto r = run("x = web_qa(query='q')\nprint(x)", &ns, &host);
  CHECK(r.out.stdout_text == "answer to q\n");
  REQUIRE(r.out.tool_calls.size() == 1);
  CHECK(r.out.tool_calls[0].tool == "web_qa");

  auto positional = run("web_qa('q')", &ns, &host);
  CHECK(positional.out.error->kind == ExecErrorKind::ArityError);

  auto unknown = run("x = mystery_tool(a=1)", &ns, &host);
  CHECK(unknown.out.error->kind == ExecErrorKind::ToolError);
  CHECK(unknown.out.tool_calls.size() == 1);
}

TEST_CASE("tool names cannot be bound") {
  RecordingHost host;
  Namespace ns;
  auto r = run("web_qa = 1", &ns, &host);
  CHECK(r.out.error->kind == ExecErrorKind::ToolError);
  CHECK(ns.bindings.empty());
  auto t = run("a, web_qa = 1, undefined_name", &ns, &host);
  CHECK(t.out.error->kind == ExecErrorKind::ToolError);
  CHECK(ns.bindings.empty());
}

TEST_CASE("final_answer stops the block") {
  RecordingHost host;
  Namespace ns;
  auto r = run("print('a')\nfinal_answer(answer=6)\nprint('b')", &ns, &host);
  CHECK(r.out.ok());
  CHECK(r.out.stdout_text == "a\n6\n");
  REQUIRE(r.out.final_answer);
  CHECK(*r.out.final_answer == Value(6));
}

TEST_CASE("whitelist soundness under fuzzed names") {
  std::mt19937 rng(9);
  const char* modules[] = {"os", "sys", "subprocess", "math", "statistics", "json", "re", "builtins", "socket"};
  const char* funcs[] = {"eval", "exec", "open", "__import__", "getattr", "compile", "input", "globals", "system"};
  for (int i = 0; i < 500; ++i) {
    std::string mod = modules[rng() % 9];
    std::string fn = funcs[rng() % 9];
    Namespace ns;
    NullToolHost host;
    auto r = run_code("import " + mod + "\n" + fn + "('x')", ns, host, {});
    REQUIRE(r.outcome.error);
    for (const auto& m : ns.imported_modules) CHECK((m == "math" || m == "statistics"));
    auto c = run_code(fn + "('x')", ns, host, {});
    CHECK(c.outcome.error->kind == ExecErrorKind::ToolError);
  }
}

TEST_CASE("determinism") {
  const char* code = "import statistics\nx = [1.5, 2.25, 9]\nprint(statistics.stdev(x), sum(x) / len(x))\nx";
  auto a = run(code);
  auto b = run(code);
  CHECK(a.out.stdout_text == b.out.stdout_text);
}
