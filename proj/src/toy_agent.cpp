// SPDX-License-Identifier: Apache-2.0
#include "toolr1/toy_agent.hpp"

#include <cmath>
#include <stdexcept>

namespace toolr1 {

ToyCodec::ToyCodec(std::vector<std::string> model_pieces, std::set<TokenId> turn_enders, EnvClassifier classify_env)
    : pieces_(std::move(model_pieces)), enders_(std::move(turn_enders)), classify_env_(std::move(classify_env)) {
  if (pieces_.empty() || pieces_.size() > 256) throw std::invalid_argument("toy codec needs 1..256 pieces");
  for (const auto& p : pieces_)
    if (p.empty()) throw std::invalid_argument("toy codec pieces must be non-empty");
  if (!classify_env_) throw std::invalid_argument("toy codec needs an ENV classifier");
}

std::vector<TokenId> ToyCodec::encode(std::string_view text, SegmentSource source) const {
  if (source == SegmentSource::Env) return {classify_env_(text)};
  std::vector<TokenId> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t best_len = 0;
    TokenId best = kUnknownToken;
    for (std::size_t id = 0; id < pieces_.size(); ++id) {
      const auto& p = pieces_[id];
      if (p.size() > best_len && text.compare(i, p.size(), p) == 0) {
        best_len = p.size();
        best = static_cast<TokenId>(id);
      }
    }
    out.push_back(best);
    i += best_len ? best_len : 1;
  }
  return out;
}

namespace {

class ToySession final : public PolicySession {
 public:
  ToySession(const ToyAgentPolicy& agent, std::uint64_t seed) : agent_(agent), rng_(seed) {}

  TurnSample next_turn(const PolicyContext& ctx, double temperature, int max_tokens) override {
    if (max_tokens < 1) throw PolicyBackendFailure("per-turn token cap must be positive");
    const ToyPolicy& policy = agent_.policy();
    const ToyCodec& codec = agent_.codec();
    std::vector<TokenId> stream = flatten_tokens(ctx.trajectory.segments);
    TurnSample s;
    for (int k = 0; k < max_tokens; ++k) {
      auto lp = policy.logprobs(policy.key_at(stream, stream.size()), temperature);
      std::vector<double> p(lp.size());
      for (std::size_t i = 0; i < lp.size(); ++i) p[i] = std::exp(lp[i]);
      auto tok = static_cast<TokenId>(rng_.categorical(p));
      stream.push_back(tok);
      s.tokens.push_back(tok);
      s.logprobs.push_back(lp[static_cast<std::size_t>(tok)]);
      s.text += codec.piece(tok);
      if (codec.ends_turn(tok)) break;
    }
    return s;
  }

 private:
  const ToyAgentPolicy& agent_;
  Rng rng_;
};

}  // namespace

ToyAgentPolicy::ToyAgentPolicy(std::shared_ptr<const ToyPolicy> policy, std::shared_ptr<const ToyCodec> codec)
    : policy_(std::move(policy)), codec_(std::move(codec)) {
  if (policy_->vocab() != codec_->vocab()) throw std::invalid_argument("policy and codec vocabularies differ");
}

std::unique_ptr<PolicySession> ToyAgentPolicy::start_episode(std::uint64_t seed) const {
  return std::make_unique<ToySession>(*this, seed);
}

}  // namespace toolr1
