// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>

namespace toolr1 {

class ChatBackend;
struct Trajectory;

enum class Judgment { Correct, PartiallyCorrect, Wrong };

const char* to_string(Judgment j);
/// Inverse of to_string; throws std::invalid_argument.
Judgment judgment_from_string(std::string_view s);

struct RewardBreakdown {
  Judgment judgment = Judgment::Wrong;
  double r_answer = 0;
  double r_parse = 0;
  double r_exec = 0;
  std::size_t n_total = 0;
  std::size_t n_parsed = 0;
  std::size_t n_executed = 0;
  double total = 0;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

enum class JudgeKind { Rule, Llm };

struct RewardConfig {
  double lambda_parse = 0.3;
  double lambda_exec = 0.3;
  JudgeKind judge = JudgeKind::Rule;
};

class AnswerJudge {
 public:
  virtual ~AnswerJudge() = default;
  virtual Judgment judge(std::string_view question, std::string_view ground_truth, std::string_view predicted) = 0;
};

/// Lowercase, trim, strip terminal punctuation, collapse whitespace, drop
/// thousands separators.
std::string normalize_answer(std::string_view s);

/// Equal after normalization: Correct. One is a whole-token run inside the
/// other: PartiallyCorrect. Empty prediction or anything else: Wrong.
Judgment rule_judge(std::string_view ground_truth, std::string_view predicted);

class RuleJudge final : public AnswerJudge {
 public:
  Judgment judge(std::string_view, std::string_view ground_truth, std::string_view predicted) override {
    return rule_judge(ground_truth, predicted);
  }
};

/// Built-in rubric used when no template file is configured.
const std::string& default_judge_prompt();

/// User message carrying the question, reference and prediction.
std::string render_judge_request(std::string_view question, std::string_view ground_truth,
                                 std::string_view predicted);

/// Finds the class label in a judge reply; "Partially Correct" is checked
/// before "Wrong" and "Correct". Returns false when no label is present.
bool parse_judgment(std::string_view reply, Judgment& out);

/// Asks a chat model to grade; one retry on an unparseable or failed reply,
/// then Wrong.
class LlmJudge final : public AnswerJudge {
 public:
  LlmJudge(std::shared_ptr<ChatBackend> backend, std::string system_prompt);
  Judgment judge(std::string_view question, std::string_view ground_truth, std::string_view predicted) override;

  std::size_t fallbacks() const { return fallbacks_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::string system_prompt_;
  std::size_t fallbacks_ = 0;
};

double answer_reward(Judgment j);

struct CodeRewards {
  double r_parse = 0;
  double r_exec = 0;
  std::size_t n_total = 0;
  std::size_t n_parsed = 0;
  std::size_t n_executed = 0;
};

/// r_parse = n_parsed / n_total, r_exec = n_executed / n_parsed; zero denominators give 0.
CodeRewards code_rewards(std::size_t n_total, std::size_t n_parsed, std::size_t n_executed);
CodeRewards code_rewards(const Trajectory& trajectory);

RewardBreakdown total_reward(Judgment judgment, const CodeRewards& code, const RewardConfig& cfg);
RewardBreakdown total_reward(Judgment judgment, double r_parse, double r_exec, const RewardConfig& cfg);

/// Judges the trajectory's final answer and combines it with its code rewards.
RewardBreakdown score_trajectory(const Trajectory& trajectory, AnswerJudge& judge, const RewardConfig& cfg);

}  // namespace toolr1
