// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toolr1/episode.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace toolr1 {

struct GroupTooSmall : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct MaskMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// (r - mean) / std with population std; all zeros when std is 0.
std::vector<double> normalize_advantages(std::span<const double> rewards);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A) with ratio = exp(new - old).
double token_term(double logprob_new, double logprob_old, double advantage, double epsilon);

/// k3 estimator exp(ref - theta) - (ref - theta) - 1.
double kl_term(double logprob_theta, double logprob_ref);

using ContextKey = std::uint64_t;
using LogitRows = std::map<ContextKey, std::vector<double>>;

/// Tabular next-token policy: logits indexed by the previous n stream tokens,
/// softmax over the model vocabulary [0, vocab). Context tokens may be any id
/// in [0, 65535); positions before the stream start read as a BOS marker.
class ToyPolicy {
 public:
  ToyPolicy() = default;
  ToyPolicy(int vocab, int context_n = 2);

  int vocab() const { return vocab_; }
  int context_n() const { return context_n_; }

  /// Key for predicting stream[pos] from the tokens before it.
  ContextKey key_at(std::span<const TokenId> stream, std::size_t pos) const;
  /// Key of an explicit context (oldest first, at most context_n ids; shorter is BOS-padded).
  ContextKey key_of(std::span<const TokenId> context) const;

  /// Logit row for a context; zeros when the context was never written.
  std::vector<double> row(ContextKey key) const;
  std::vector<double>& mutable_row(ContextKey key);
  std::vector<double> probs(ContextKey key, double temperature) const;
  std::vector<double> logprobs(ContextKey key, double temperature) const;

  const LogitRows& table() const { return table_; }
  LogitRows& table() { return table_; }

  std::int64_t version = 0;

  friend bool operator==(const ToyPolicy&, const ToyPolicy&) = default;

 private:
  int vocab_ = 0;
  int context_n_ = 2;
  LogitRows table_;
};

/// log softmax(logits / T).
std::vector<double> log_softmax(std::span<const double> logits, double temperature);

/// Exact KL(pi_theta || pi_ref) of one context row at temperature T.
double exact_kl(const ToyPolicy& theta, const ToyPolicy& ref, ContextKey key, double temperature);

enum class LengthNorm { UnmaskedTokens, AllTokens };
enum class OldPolicy { Behavior, StepStart };

struct GrpoConfig {
  double epsilon = 0.2;
  double beta = 0.001;
  double learning_rate = 1e-6;
  /// Temperature at which pi_theta and pi_ref are evaluated; matches sampling.
  double temperature = 0.6;
  LengthNorm length_normalization = LengthNorm::UnmaskedTokens;
  /// Behavior: ratios use the logprobs stored at sampling time. StepStart:
  /// the current policy is the old policy.
  OldPolicy old_policy = OldPolicy::Behavior;
};

/// One trajectory as aligned per-token arrays. Only positions with mask 1
/// are read from old_logprobs and advantages.
struct TokenStream {
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> mask;
  std::vector<double> old_logprobs;
  std::vector<double> advantages;
};

/// Builds a stream from a trajectory; the mask comes from build_mask and may throw BoundaryMismatch.
TokenStream make_stream(const Trajectory& trajectory, const Tokenizer& tokenizer, double advantage);

struct LossReport {
  double objective = 0;
  double surrogate = 0;
  double kl_value = 0;
  /// Clipped surrogate term per model token, per trajectory.
  std::vector<std::vector<double>> per_token_terms;
  LogitRows gradient;
  std::size_t model_tokens = 0;
};

/// Mean over trajectories of length-normalized clipped-surrogate sums, minus
/// beta times the mean per-trajectory KL, with its exact gradient w.r.t. the
/// policy logits.
LossReport grpo_objective(std::span<const TokenStream> streams, const ToyPolicy& policy, const ToyPolicy& ref,
                          const GrpoConfig& cfg);

/// logits += lr * gradient; version + 1. Throws NonFiniteGradient before touching the policy.
void apply_update(ToyPolicy& policy, const LogitRows& gradient, double learning_rate);

}  // namespace toolr1
