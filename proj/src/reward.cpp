// SPDX-License-Identifier: Apache-2.0
#include "toolr1/reward.hpp"

#include "toolr1/episode.hpp"
#include "toolr1/live.hpp"

#include <fmt/format.h>

#include <cctype>
#include <iostream>
#include <stdexcept>

namespace toolr1 {

const char* to_string(Judgment j) {
  switch (j) {
    case Judgment::Correct: return "Correct";
    case Judgment::PartiallyCorrect: return "Partially Correct";
    case Judgment::Wrong: return "Wrong";
  }
  return "Wrong";
}

Judgment judgment_from_string(std::string_view s) {
  if (s == "Correct") return Judgment::Correct;
  if (s == "Partially Correct") return Judgment::PartiallyCorrect;
  if (s == "Wrong") return Judgment::Wrong;
  throw std::invalid_argument(fmt::format("unknown judgment '{}'", s));
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_terminal_punct(char c) { return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':'; }

std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool contains_run(const std::vector<std::string_view>& hay, const std::vector<std::string_view>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  return false;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string lower;
  lower.reserve(s.size());
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  // Thousands separators: a comma between a digit and a group of exactly three digits.
  std::string nosep;
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (lower[i] == ',' && i > 0 && is_digit(lower[i - 1])) {
      std::size_t k = i + 1;
      while (k < lower.size() && is_digit(lower[k])) ++k;
      if (k - i - 1 == 3) continue;
    }
    nosep.push_back(lower[i]);
  }

  std::string collapsed;
  for (char c : nosep) {
    if (is_space(c)) {
      if (!collapsed.empty() && collapsed.back() != ' ') collapsed.push_back(' ');
    } else {
      collapsed.push_back(c);
    }
  }
  while (!collapsed.empty() && (collapsed.back() == ' ' || is_terminal_punct(collapsed.back()))) collapsed.pop_back();
  return collapsed;
}

Judgment rule_judge(std::string_view ground_truth, std::string_view predicted) {
  std::string p = normalize_answer(predicted);
  if (p.empty()) return Judgment::Wrong;
  std::string g = normalize_answer(ground_truth);
  if (p == g) return Judgment::Correct;
  auto pw = words(p), gw = words(g);
  if (contains_run(pw, gw) || contains_run(gw, pw)) return Judgment::PartiallyCorrect;
  return Judgment::Wrong;
}

const std::string& default_judge_prompt() {
  static const std::string prompt =
      "You grade answers produced by an AI assistant. You receive a question, the reference answer and the "
      "assistant's answer. Judge the assistant's answer on four points:\n"
      "(1) Accuracy: is it factually consistent with the reference?\n"
      "(2) Completeness: does it cover everything the reference covers?\n"
      "(3) Relevance: does it answer the question without unrelated material?\n"
      "(4) Precision: is it specific and well defined?\n"
      "Weigh all four, then give exactly one label: \"Correct\", \"Partially Correct\", or \"Wrong\".";
  return prompt;
}

std::string render_judge_request(std::string_view question, std::string_view ground_truth,
                                 std::string_view predicted) {
  return fmt::format(
      "Question: {}\nGround truth answer: {}\nPredicted answer: {}\n\n"
      "Reply with one label: Correct, Partially Correct, or Wrong.",
      question, ground_truth, predicted);
}

namespace {

bool has_word(std::string_view hay, std::string_view word) {
  auto alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  std::size_t pos = 0;
  while ((pos = hay.find(word, pos)) != std::string_view::npos) {
    bool left = pos == 0 || !alpha(hay[pos - 1]);
    std::size_t end = pos + word.size();
    bool right = end >= hay.size() || !alpha(hay[end]);
    if (left && right) return true;
    ++pos;
  }
  return false;
}

}  // namespace

bool parse_judgment(std::string_view reply, Judgment& out) {
  std::string lower;
  for (char c : reply) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  std::string squeezed;
  for (char c : lower) {
    if (is_space(c)) {
      if (!squeezed.empty() && squeezed.back() != ' ') squeezed.push_back(' ');
    } else {
      squeezed.push_back(c);
    }
  }
  if (has_word(squeezed, "partially correct")) out = Judgment::PartiallyCorrect;
  else if (has_word(squeezed, "wrong")) out = Judgment::Wrong;
  else if (has_word(squeezed, "correct")) out = Judgment::Correct;
  else return false;
  return true;
}

LlmJudge::LlmJudge(std::shared_ptr<ChatBackend> backend, std::string system_prompt)
    : backend_(std::move(backend)), system_prompt_(std::move(system_prompt)) {
  if (!backend_) throw std::invalid_argument("LLM judge needs a chat backend");
}

Judgment LlmJudge::judge(std::string_view question, std::string_view ground_truth, std::string_view predicted) {
  ChatRequest req;
  req.messages = {{"system", system_prompt_}, {"user", render_judge_request(question, ground_truth, predicted)}};
  req.temperature = 0.0;
  req.max_tokens = 64;
  std::string last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = backend_->complete(req);
    if (auto* r = std::get_if<ChatReply>(&reply)) {
      Judgment j;
      if (parse_judgment(r->text, j)) return j;
      last = "unparseable reply: " + r->text;
    } else {
      last = std::get<ToolError>(reply).describe();
    }
  }
  ++fallbacks_;
  std::cerr << fmt::format("judge: falling back to Wrong ({})\n", last);
  return Judgment::Wrong;
}

double answer_reward(Judgment j) {
  switch (j) {
    case Judgment::Correct: return 1.0;
    case Judgment::PartiallyCorrect: return 0.5;
    case Judgment::Wrong: return 0.0;
  }
  return 0.0;
}

CodeRewards code_rewards(std::size_t n_total, std::size_t n_parsed, std::size_t n_executed) {
  if (n_parsed > n_total || n_executed > n_parsed)
    throw std::invalid_argument("counts must satisfy n_executed <= n_parsed <= n_total");
  CodeRewards c{0, 0, n_total, n_parsed, n_executed};
  if (n_total > 0) c.r_parse = static_cast<double>(n_parsed) / static_cast<double>(n_total);
  if (n_parsed > 0) c.r_exec = static_cast<double>(n_executed) / static_cast<double>(n_parsed);
  return c;
}

CodeRewards code_rewards(const Trajectory& trajectory) {
  std::size_t parsed = 0, executed = 0;
  for (const auto& s : trajectory.steps) {
    parsed += s.code_parsed();
    executed += s.code_executed();
  }
  return code_rewards(trajectory.steps.size(), parsed, executed);
}

RewardBreakdown total_reward(Judgment judgment, const CodeRewards& code, const RewardConfig& cfg) {
  RewardBreakdown b;
  b.judgment = judgment;
  b.r_answer = answer_reward(judgment);
  b.r_parse = code.r_parse;
  b.r_exec = code.r_exec;
  b.n_total = code.n_total;
  b.n_parsed = code.n_parsed;
  b.n_executed = code.n_executed;
  b.total = b.r_answer + cfg.lambda_parse * b.r_parse + cfg.lambda_exec * b.r_exec;
  return b;
}

RewardBreakdown total_reward(Judgment judgment, double r_parse, double r_exec, const RewardConfig& cfg) {
  CodeRewards c;
  c.r_parse = r_parse;
  c.r_exec = r_exec;
  return total_reward(judgment, c, cfg);
}

RewardBreakdown score_trajectory(const Trajectory& trajectory, AnswerJudge& judge, const RewardConfig& cfg) {
  Judgment j = judge.judge(trajectory.question, trajectory.ground_truth, trajectory.predicted());
  return total_reward(j, code_rewards(trajectory), cfg);
}

}  // namespace toolr1
