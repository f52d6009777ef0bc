// SPDX-License-Identifier: Apache-2.0
#include "toolr1/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

namespace toolr1::synthetic {

const std::vector<std::string>& pieces() {
  static const std::vector<std::string> kPieces = {
      "Thought: I need the value, so I will query the tool.\n",
      "Thought: I have the value and can finish.\n",
      "Code:\n```py\nx = web_qa(query=\"value\", question=\"What is the value?\")\nprint(x)\n```<end_code>",
      "Code:\n```py\nfinal_answer(answer=int(x) * 3 + 1)\n```<end_code>",
      "Code:\n```py\nfinal_answer(answer=0)\n```<end_code>",
      "Code:\n```py\nx = = 1\n```<end_code>",
      "Code: print(x)\n",
  };
  return kPieces;
}

TokenId classify_env(std::string_view segment) {
  constexpr std::string_view kPrefix = "\nObservation:\n";
  if (segment.substr(0, kPrefix.size()) != kPrefix) return kEnvTask;
  std::string_view body = segment.substr(kPrefix.size());
  while (!body.empty() && body.back() == '\n') body.remove_suffix(1);
  if (body.empty()) return kObsEmpty;
  if (body.substr(0, 6) == "Error:" || body.find("\nError:") != std::string_view::npos) return kObsError;
  if (std::all_of(body.begin(), body.end(), [](unsigned char c) { return std::isdigit(c); })) return kObsValue;
  return kObsText;
}

std::shared_ptr<const ToyCodec> make_codec() {
  return std::make_shared<const ToyCodec>(
      pieces(), std::set<TokenId>{kCodeLookup, kCodeFinal, kCodeGuess, kCodeBroken, kCodeUnfenced}, classify_env);
}

Task make_task(std::size_t n, std::uint64_t seed) {
  Task task;
  Rng rng(derive_seed(seed, "synthetic-task", {n}));
  for (std::size_t k = 0; k < n; ++k) {
    const auto v = static_cast<std::int64_t>(2 + rng.below(98));
    const std::string qid = fmt::format("syn-{:04d}", k);
    task.values.push_back(v);
    task.items.push_back({qid,
                          fmt::format("Look up the registered value for item {} and report three times it plus one.", k),
                          std::to_string(3 * v + 1), std::nullopt, "synthetic", std::nullopt});
    task.fixtures.entries.push_back({"web_qa", qid, {}, std::to_string(v), std::nullopt});
  }
  return task;
}

const std::string& system_prompt() {
  static const std::string kPrompt =
      "Solve the task with Thought and Code steps. Tools: web_qa(query, question), final_answer(answer).";
  return kPrompt;
}

std::vector<std::vector<TokenId>> reachable_contexts() {
  std::vector<TokenId> env = {kEnvTask, kObsValue, kObsError, kObsEmpty, kObsText};
  std::vector<TokenId> all = env;
  for (TokenId p = 0; p < kPieceCount; ++p) all.push_back(p);
  std::vector<std::vector<TokenId>> out;
  // First symbol of a stream sits after BOS and the task segment.
  out.push_back({kEnvTask});
  for (TokenId a : all)
    for (TokenId b : all) out.push_back({a, b});
  return out;
}

std::vector<std::pair<std::vector<TokenId>, TokenId>> solving_path() {
  return {{{kEnvTask}, kThinkLookup},
          {{kEnvTask, kThinkLookup}, kCodeLookup},
          {{kCodeLookup, kObsValue}, kThinkFinish},
          {{kObsValue, kThinkFinish}, kCodeFinal}};
}

ToyPolicy initial_policy(double path_bias, double malformed_bias, int context_n) {
  ToyPolicy p(kPieceCount, context_n);
  for (const auto& ctx : reachable_contexts()) {
    auto& row = p.mutable_row(p.key_of(ctx));
    row.assign(kPieceCount, 0.0);
    row[kCodeUnfenced] = malformed_bias;
    row[kCodeBroken] = malformed_bias * 0.5;
  }
  for (const auto& [ctx, sym] : solving_path()) p.mutable_row(p.key_of(ctx))[sym] += path_bias;
  return p;
}

EpisodeConfig episode_config(double temperature) {
  EpisodeConfig cfg;
  cfg.max_steps = 4;
  cfg.max_turn_tokens = 3;
  cfg.temperature = temperature;
  return cfg;
}

std::vector<std::string> solving_turns() {
  const auto& p = pieces();
  return {p[kThinkLookup] + p[kCodeLookup], p[kThinkFinish] + p[kCodeFinal]};
}

std::vector<std::string> guessing_turns() {
  const auto& p = pieces();
  return {p[kThinkFinish] + p[kCodeGuess]};
}

ScriptedPolicy engineered_policy(const std::vector<DatasetItem>& items, const std::vector<double>& success_rates) {
  if (items.size() != success_rates.size()) throw std::invalid_argument("one success rate per item");
  ScriptedPolicy policy;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double s = success_rates[i];
    if (s < 0 || s > 1) throw std::invalid_argument("success rate outside [0, 1]");
    TurnScript script;
    if (s > 0) script.variants.push_back(solving_turns()), script.weights.push_back(s);
    if (s < 1) script.variants.push_back(guessing_turns()), script.weights.push_back(1 - s);
    policy.add(items[i].question_id, std::move(script));
  }
  return policy;
}

}  // namespace toolr1::synthetic
