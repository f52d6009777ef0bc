// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toolr1/episode.hpp"
#include "toolr1/grpo.hpp"

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace toolr1 {

/// Maps text to toy-policy symbols. MODEL text is covered greedily by the
/// longest matching piece (bytes no piece covers become kUnknownToken). Each
/// ENV segment becomes the single class token chosen by the classifier.
class ToyCodec final : public Tokenizer {
 public:
  static constexpr TokenId kUnknownToken = 65534;
  using EnvClassifier = std::function<TokenId(std::string_view)>;

  ToyCodec(std::vector<std::string> model_pieces, std::set<TokenId> turn_enders, EnvClassifier classify_env);

  std::vector<TokenId> encode(std::string_view text, SegmentSource source) const override;

  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::string& piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  bool ends_turn(TokenId id) const { return enders_.count(id) > 0; }
  int vocab() const { return static_cast<int>(pieces_.size()); }

 private:
  std::vector<std::string> pieces_;
  std::set<TokenId> enders_;
  EnvClassifier classify_env_;
};

/// Samples turns symbol by symbol from a ToyPolicy at the episode temperature.
/// A turn ends on a turn-ending symbol or at the per-turn token cap.
class ToyAgentPolicy final : public SamplingPolicy {
 public:
  ToyAgentPolicy(std::shared_ptr<const ToyPolicy> policy, std::shared_ptr<const ToyCodec> codec);

  std::unique_ptr<PolicySession> start_episode(std::uint64_t seed) const override;
  const Tokenizer& tokenizer() const override { return *codec_; }
  std::int64_t version() const override { return policy_->version; }

  const ToyPolicy& policy() const { return *policy_; }
  const ToyCodec& codec() const { return *codec_; }

 private:
  std::shared_ptr<const ToyPolicy> policy_;
  std::shared_ptr<const ToyCodec> codec_;
};

}  // namespace toolr1
