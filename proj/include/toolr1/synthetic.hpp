// SPDX-License-Identifier: Apache-2.0
// Synthetic lookup-and-arithmetic task family for the toy policy.
//
// Each question hides an integer v behind the web_qa tool; the answer is
// 3 * v + 1. A successful episode looks up the value in one turn and submits
// the arithmetic in the next.
#pragma once

#include "toolr1/episode.hpp"
#include "toolr1/grpo.hpp"
#include "toolr1/toy_agent.hpp"
#include "toolr1/tools.hpp"
#include "toolr1/trainer.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace toolr1::synthetic {

/// Model symbols, in id order.
enum Piece : TokenId {
  kThinkLookup = 0,  // "Thought: I need the value ..."
  kThinkFinish,      // "Thought: I have the value ..."
  kCodeLookup,       // fenced web_qa call, ends the turn
  kCodeFinal,        // fenced final_answer(int(x) * 3 + 1), ends the turn
  kCodeGuess,        // fenced final_answer(0), ends the turn
  kCodeBroken,       // fenced block with a syntax error, ends the turn
  kCodeUnfenced,     // "Code:" without a fence, ends the turn
  kPieceCount
};

/// ENV class symbols (outside the model vocabulary).
enum EnvClass : TokenId {
  kEnvTask = 100,
  kObsValue,
  kObsError,
  kObsEmpty,
  kObsText,
};

const std::vector<std::string>& pieces();
/// Classifies an ENV segment by its rendered text.
TokenId classify_env(std::string_view segment);
std::shared_ptr<const ToyCodec> make_codec();

struct Task {
  std::vector<DatasetItem> items;
  std::vector<std::int64_t> values;  // hidden value per item
  FixtureTable fixtures;
};

/// n questions with values drawn from [2, 99] under `seed`.
Task make_task(std::size_t n, std::uint64_t seed);

/// Short system prompt for toy runs; the codec reduces it to one symbol.
const std::string& system_prompt();

/// Every context the episode loop can reach with context_n = 2.
std::vector<std::vector<TokenId>> reachable_contexts();

/// The four (context, symbol) pairs of a solving episode.
std::vector<std::pair<std::vector<TokenId>, TokenId>> solving_path();

/// Defaults used by toy training runs.
inline constexpr double kPathBias = 1.5;
inline constexpr double kMalformedBias = 1.0;

/// Initial policy: every reachable row leans toward malformed turns by
/// `malformed_bias`, and the solving path gets `path_bias` on its symbol.
ToyPolicy initial_policy(double path_bias, double malformed_bias, int context_n = 2);

/// Episode settings used for toy runs: 4 steps, 3 symbols per turn.
EpisodeConfig episode_config(double temperature = 0.6);

/// Turn texts for scripted variants.
std::vector<std::string> solving_turns();
std::vector<std::string> guessing_turns();

/// Scripted policy whose questions succeed with the given probabilities
/// (variants weighted success : guess).
ScriptedPolicy engineered_policy(const std::vector<DatasetItem>& items, const std::vector<double>& success_rates);

}  // namespace toolr1::synthetic
