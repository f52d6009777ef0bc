// SPDX-License-Identifier: Apache-2.0
#include "toolr1/remote_policy.hpp"

namespace toolr1 {

std::vector<ChatMessage> chat_messages(const Trajectory& trajectory) {
  std::vector<ChatMessage> out;
  if (!trajectory.segments.empty()) out.push_back({"system", trajectory.segments.front().text});
  for (const auto& step : trajectory.steps) {
    out.push_back({"assistant", step.turn});
    out.push_back({"user", "Observation:\n" + step.observation});
  }
  return out;
}

namespace {

class RemoteSession final : public PolicySession {
 public:
  explicit RemoteSession(const RemotePolicy& policy) : policy_(policy) {}

  TurnSample next_turn(const PolicyContext& ctx, double temperature, int max_tokens) override {
    ChatRequest req;
    req.model = policy_.model();
    req.messages = chat_messages(ctx.trajectory);
    req.temperature = temperature;
    req.max_tokens = max_tokens;
    req.stop = {"\nObservation:"};
    auto reply = policy_.backend().complete(std::move(req));
    if (auto* err = std::get_if<ToolError>(&reply)) throw PolicyBackendFailure(err->describe());
    TurnSample s;
    s.text = std::get<ChatReply>(reply).text;
    s.tokens = policy_.tokenizer().encode(s.text, SegmentSource::Model);
    s.logprobs.assign(s.tokens.size(), 0.0);
    return s;
  }

 private:
  const RemotePolicy& policy_;
};

}  // namespace

RemotePolicy::RemotePolicy(std::shared_ptr<ChatBackend> backend, std::string model)
    : backend_(std::move(backend)), model_(std::move(model)) {
  if (!backend_) throw std::invalid_argument("remote policy needs a chat backend");
}

std::unique_ptr<PolicySession> RemotePolicy::start_episode(std::uint64_t) const {
  return std::make_unique<RemoteSession>(*this);
}

}  // namespace toolr1
