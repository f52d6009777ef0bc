// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toolr1/interpreter.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace toolr1 {

enum class ParamType { String, Any };

struct ToolParam {
  std::string name;
  ParamType type = ParamType::String;
  bool required = true;
  std::string description;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ToolParam> inputs;
  ParamType output_type = ParamType::String;
};

enum class ToolErrorKind { UnknownTool, MissingArgument, InvalidArgument, BackendTimeout, BackendFailure, Terminated };

const char* to_string(ToolErrorKind kind);

struct ToolError {
  ToolErrorKind kind;
  std::string message;

  /// "BackendFailure: <message>" form used in observations.
  std::string describe() const;
};

using ToolReply = std::variant<std::string, ToolError>;

/// Per-call context a backend may key on.
struct CallContext {
  std::string question_id;
};

/// Executes validated tool calls. Implementations must tolerate concurrent calls.
class ToolBackend {
 public:
  virtual ~ToolBackend() = default;
  virtual ToolReply call(const ToolSpec& spec, const Kwargs& kwargs, const CallContext& ctx) = 0;
};

/// The seven canonical tools, in registration order.
std::vector<ToolSpec> canonical_tool_specs();

/// Immutable set of tool specs plus the backend that serves them.
class ToolRegistry {
 public:
  ToolRegistry() = default;
  ToolRegistry(std::vector<ToolSpec> specs, std::shared_ptr<ToolBackend> backend);

  /// Canonical tools served by `backend`.
  static ToolRegistry canonical(std::shared_ptr<ToolBackend> backend);

  const std::vector<ToolSpec>& specs() const { return specs_; }
  const ToolSpec* find(std::string_view name) const;
  bool has(std::string_view name) const { return find(name) != nullptr; }

  /// Validates kwargs, then dispatches. `final_answer` never reaches the backend;
  /// its reply is the rendered answer.
  ToolReply invoke(const std::string& name, const Kwargs& kwargs, const CallContext& ctx = {}) const;

 private:
  std::vector<ToolSpec> specs_;
  std::shared_ptr<ToolBackend> backend_;
};

/// Tool-list section of the system prompt, one block per tool.
std::string render_tool_docs(const ToolRegistry& registry);

/// Built-in agent instructions with `{tool_docs}` and `{authorized_imports}` slots.
const std::string& default_system_prompt_template();

/// Fills the template slots from the registry and the import whitelist.
std::string render_system_prompt(std::string_view tmpl, const ToolRegistry& registry,
                                 const std::set<std::string>& authorized_imports);

/// The interpreter-facing view of the registry for one episode. Holds the
/// terminal flag: after a successful final_answer every call is rejected.
class EpisodeTools final : public ToolHost {
 public:
  EpisodeTools(const ToolRegistry& registry, CallContext ctx) : registry_(registry), ctx_(std::move(ctx)) {}

  bool has_tool(std::string_view name) const override { return registry_.has(name); }
  ToolResult invoke(const std::string& name, const Kwargs& kwargs) override;

  bool terminated() const { return terminated_; }
  const std::optional<Value>& answer() const { return answer_; }

 private:
  const ToolRegistry& registry_;
  CallContext ctx_;
  bool terminated_ = false;
  std::optional<Value> answer_;
};

/// Deterministic canned responses keyed by tool and argument values.
///
/// JSON shape:
///   {"entries": [{"tool": "...", "question_id": "...", "match": {"param": "text"},
///                 "response": "..."} | {..., "error": "timeout" | "failure"}],
///    "defaults": {"tool": "response"}}
/// Entries are tried in order; `question_id` and `match` are optional filters
/// and a match compares against the rendered argument value.
struct FixtureEntry {
  std::string tool;
  std::optional<std::string> question_id;
  std::map<std::string, std::string> match;
  std::string response;
  std::optional<ToolErrorKind> error;
};

struct FixtureTable {
  std::vector<FixtureEntry> entries;
  std::map<std::string, std::string> defaults;

  static FixtureTable from_json_text(std::string_view text);
  static FixtureTable load(const std::filesystem::path& path);
  /// Appends another table's entries; its defaults fill gaps only.
  void merge(const FixtureTable& other);
};

class FixtureBackend final : public ToolBackend {
 public:
  explicit FixtureBackend(FixtureTable table) : table_(std::move(table)) {}
  ToolReply call(const ToolSpec& spec, const Kwargs& kwargs, const CallContext& ctx) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  FixtureTable table_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace toolr1
