// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toolr1/interpreter.hpp"
#include "toolr1/reward.hpp"
#include "toolr1/rng.hpp"
#include "toolr1/tools.hpp"
#include "toolr1/turn_parser.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toolr1 {

using TokenId = std::int32_t;

enum class SegmentSource { Model, Env };

struct Segment {
  std::string text;
  SegmentSource source = SegmentSource::Env;
  /// Token ids recorded when the segment was produced.
  std::vector<TokenId> tokens;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Segment-wise tokenizer of a policy. Encoding one segment never depends on
/// its neighbours.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenId> encode(std::string_view text, SegmentSource source) const = 0;
};

struct Step {
  std::string turn;
  TurnParseResult parsed = ParseFailure{ParseFailureKind::MissingThought};
  /// Program-level syntax error for a turn whose code block was extracted.
  std::optional<SyntaxError> syntax_error;
  std::optional<ExecOutcome> exec;
  std::string observation;

  bool turn_parsed() const { return std::holds_alternative<ParsedStep>(parsed); }
  /// Counts toward n_parsed: the turn split cleanly and the code parsed.
  bool code_parsed() const { return turn_parsed() && !syntax_error; }
  /// Counts toward n_executed.
  bool code_executed() const { return code_parsed() && exec && exec->ok(); }
};

struct Trajectory {
  std::string question_id;
  std::string question;
  std::string ground_truth;
  std::vector<Step> steps;
  std::vector<Segment> segments;
  std::optional<std::string> final_answer;
  /// One entry per MODEL token, in stream order.
  std::vector<double> behavior_logprobs;
  std::int64_t policy_version = 0;
  std::optional<RewardBreakdown> reward;
  /// Set when the policy backend failed; such trajectories are never trained on.
  bool failed = false;
  std::string failure;

  std::size_t model_token_count() const;
  /// Empty string when no final answer was submitted.
  std::string predicted() const { return final_answer.value_or(""); }
};

struct EpisodeConfig {
  int max_steps = 10;
  double temperature = 0.6;
  std::size_t observation_cap = 4096;
  /// Per-turn generation cap.
  int max_turn_tokens = 2048;
  ParserConfig parser;
  ExecLimits limits;
};

/// What a policy sees before generating a turn.
struct PolicyContext {
  /// serialize_context() of the trajectory so far.
  std::string_view text;
  const Trajectory& trajectory;
};

struct TurnSample {
  std::string text;
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
};

struct PolicyBackendFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-episode sampling session.
class PolicySession {
 public:
  virtual ~PolicySession() = default;
  /// Throws PolicyBackendFailure.
  virtual TurnSample next_turn(const PolicyContext& ctx, double temperature, int max_tokens) = 0;
};

/// Sampling contract. Must be safe to start sessions concurrently.
class SamplingPolicy {
 public:
  virtual ~SamplingPolicy() = default;
  virtual std::unique_ptr<PolicySession> start_episode(std::uint64_t seed) const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::int64_t version() const { return 0; }
};

/// Executes one step's code for one episode.
class CodeExecutor {
 public:
  virtual ~CodeExecutor() = default;
  virtual RunResult run(std::string_view code, ToolHost& tools) = 0;
};

class BuiltinExecutor final : public CodeExecutor {
 public:
  explicit BuiltinExecutor(ExecLimits limits = {}) : limits_(std::move(limits)) {}
  RunResult run(std::string_view code, ToolHost& tools) override { return run_code(code, ns_, tools, limits_); }
  const Namespace& ns() const { return ns_; }

 private:
  ExecLimits limits_;
  Namespace ns_;
};

/// Creates one executor per episode.
class ExecutorFactory {
 public:
  virtual ~ExecutorFactory() = default;
  virtual std::unique_ptr<CodeExecutor> create(const ExecLimits& limits) const = 0;
};

class BuiltinExecutorFactory final : public ExecutorFactory {
 public:
  std::unique_ptr<CodeExecutor> create(const ExecLimits& limits) const override {
    return std::make_unique<BuiltinExecutor>(limits);
  }
};

inline constexpr std::string_view kParseFailureObservation = "Error: code block could not be parsed.";

struct EpisodeInput {
  std::string question_id;
  std::string question;
  std::string ground_truth;
};

struct EpisodeDeps {
  const SamplingPolicy& policy;
  const ToolRegistry& tools;
  /// Full system prompt with tool docs already inserted.
  const std::string& system_prompt;
  const ExecutorFactory* executors = nullptr;  // builtin when null
};

/// Runs Thought/Code/Observation cycles until final_answer succeeds or
/// max_steps turns have been taken.
Trajectory run_episode(const EpisodeInput& input, const EpisodeDeps& deps, const EpisodeConfig& cfg,
                       std::uint64_t seed);

/// Text of the leading ENV segment.
std::string render_task_segment(std::string_view system_prompt, std::string_view question);
/// Text of the ENV segment following a step.
std::string render_observation_segment(std::string_view observation);

/// Concatenation of all segment texts.
std::string serialize_context(const Trajectory& trajectory);
/// Same rendering from parts: system prompt, task, then each turn and its observation.
std::string serialize_context(std::string_view system_prompt, std::string_view question,
                              const std::vector<Step>& steps);

/// Observation for a step: stdout, then "Error: <kind>: <message>" if the run failed.
std::string render_observation(const Step& step, std::size_t cap);

struct BoundaryMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Re-tokenizes every segment and returns 1 for MODEL tokens, 0 for ENV.
/// Throws BoundaryMismatch when a segment does not reproduce its recorded tokens.
std::vector<std::uint8_t> build_mask(const std::vector<Segment>& segments, const Tokenizer& tokenizer);

/// Flattened token ids of all segments.
std::vector<TokenId> flatten_tokens(const std::vector<Segment>& segments);

// --- simple policies ---

/// Splits text into maximal runs of whitespace and non-whitespace; ids are
/// 31-bit hashes of the run text.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<TokenId> encode(std::string_view text, SegmentSource source) const override;
  static std::vector<std::string_view> split(std::string_view text);
};

/// Alternative turn sequences for one question, drawn per episode by weight.
struct TurnScript {
  std::vector<std::vector<std::string>> variants;
  std::vector<double> weights;
};

/// Replays scripted turns; logprobs are zero. Scripts are looked up by
/// question id, falling back to the default script. An exhausted script
/// repeats its last turn.
class ScriptedPolicy final : public SamplingPolicy {
 public:
  ScriptedPolicy() = default;
  explicit ScriptedPolicy(std::vector<std::string> turns) { set_default({{std::move(turns)}, {1.0}}); }

  void set_default(TurnScript script) { default_ = std::move(script); }
  void add(std::string question_id, TurnScript script) { scripts_[std::move(question_id)] = std::move(script); }

  std::unique_ptr<PolicySession> start_episode(std::uint64_t seed) const override;
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  const TurnScript* script_for(const std::string& question_id) const;

 private:
  std::optional<TurnScript> default_;
  std::map<std::string, TurnScript> scripts_;
  WhitespaceTokenizer tokenizer_;
};

}  // namespace toolr1
