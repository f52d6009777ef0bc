// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toolr1/episode.hpp"
#include "toolr1/live.hpp"

#include <memory>
#include <string>

namespace toolr1 {

/// Chat messages for the next turn: the task segment as the system message,
/// then each turn as an assistant message followed by its observation.
std::vector<ChatMessage> chat_messages(const Trajectory& trajectory);

/// Samples turns from a chat-completion endpoint. Used for rollouts and
/// evaluation only: its tokens are whitespace runs with zero logprobs, so
/// its trajectories cannot feed a GRPO update.
class RemotePolicy final : public SamplingPolicy {
 public:
  RemotePolicy(std::shared_ptr<ChatBackend> backend, std::string model);

  std::unique_ptr<PolicySession> start_episode(std::uint64_t seed) const override;
  const Tokenizer& tokenizer() const override { return tokenizer_; }

  ChatBackend& backend() const { return *backend_; }
  const std::string& model() const { return model_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::string model_;
  WhitespaceTokenizer tokenizer_;
};

}  // namespace toolr1
