// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toolr1/ast.hpp"
#include "toolr1/value.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace toolr1 {

struct SyntaxError {
  std::string message;
  int line = 1;
  int column = 1;

  std::string describe() const;
};

using ProgramParseResult = std::variant<ast::Program, SyntaxError>;

/// Parses a code block in the restricted statement grammar: assignments
/// (single or tuple), expression statements, imports and comments, separated
/// by newlines or semicolons. Control flow, definitions and subscripts are
/// syntax errors. Imports always parse; the whitelist applies at execution.
ProgramParseResult parse_program(std::string_view code);

enum class ExecErrorKind { NameError, TypeError, ArityError, ImportError, ToolError, LimitExceeded };

const char* to_string(ExecErrorKind kind);

struct ExecError {
  ExecErrorKind kind;
  std::string message;

  friend bool operator==(const ExecError&, const ExecError&) = default;
};

using Kwargs = std::vector<std::pair<std::string, Value>>;

struct ToolCall {
  std::string tool;
  Kwargs kwargs;

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct ExecOutcome {
  std::string stdout_text;
  std::optional<ExecError> error;
  std::vector<ToolCall> tool_calls;
  /// Set when a terminal tool (final_answer) completed during this block.
  std::optional<Value> final_answer;

  bool ok() const { return !error.has_value(); }
};

struct ExecLimits {
  std::size_t max_statements = 256;
  std::size_t max_stdout = 4096;
  std::size_t max_list_length = 10000;
  std::size_t max_string_length = 1 << 20;
  std::set<std::string> allowed_imports{"math", "statistics"};
};

/// Per-episode bindings; persists across execute() calls.
struct Namespace {
  std::map<std::string, Value> bindings;
  std::set<std::string> imported_modules;
};

/// Result of one tool dispatch seen from the interpreter.
struct ToolResult {
  std::variant<std::string, ExecError> result;
  /// The submitted answer when the call was a successful terminal call.
  std::optional<Value> final_value;
};

/// Tool dispatch surface the interpreter calls through.
class ToolHost {
 public:
  virtual ~ToolHost() = default;
  virtual bool has_tool(std::string_view name) const = 0;
  virtual ToolResult invoke(const std::string& name, const Kwargs& kwargs) = 0;
};

/// Runs statements in order against `ns`. Stops at the first error or after a
/// terminal tool call. Tool names can never be bound.
ExecOutcome execute(const ast::Program& program, Namespace& ns, ToolHost& tools, const ExecLimits& limits);

/// Parses then executes; on a syntax error nothing runs.
struct RunResult {
  std::optional<SyntaxError> syntax_error;
  ExecOutcome outcome;
};
RunResult run_code(std::string_view code, Namespace& ns, ToolHost& tools, const ExecLimits& limits);

/// ToolHost with no tools; every call fails as an unknown tool.
class NullToolHost final : public ToolHost {
 public:
  bool has_tool(std::string_view) const override { return false; }
  ToolResult invoke(const std::string& name, const Kwargs&) override;
};

}  // namespace toolr1
