// SPDX-License-Identifier: Apache-2.0
#include "toolr1/grpo.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace toolr1 {

std::vector<double> normalize_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw GroupTooSmall(fmt::format("group of {} rewards; need at least 2", rewards.size()));
  std::vector<double> out(rewards.size(), 0.0);
  // Equal rewards can leave a rounding residue in the mean; test equality directly.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;
  const double n = static_cast<double>(rewards.size());
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  double sd = std::sqrt(var);
  if (!(sd > 0)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

double token_term(double logprob_new, double logprob_old, double advantage, double epsilon) {
  double ratio = std::exp(logprob_new - logprob_old);
  double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_term(double logprob_theta, double logprob_ref) {
  double d = logprob_ref - logprob_theta;
  return std::exp(d) - d - 1.0;
}

namespace {

constexpr std::uint64_t kBosSlot = 0xFFFF;

}  // namespace

ToyPolicy::ToyPolicy(int vocab, int context_n) : vocab_(vocab), context_n_(context_n) {
  if (vocab < 1 || vocab > 256) throw std::invalid_argument("toy vocabulary must have 1..256 symbols");
  if (context_n < 0 || context_n > 4) throw std::invalid_argument("toy context length must be 0..4");
}

ContextKey ToyPolicy::key_of(std::span<const TokenId> context) const {
  ContextKey key = 0;
  std::size_t n = static_cast<std::size_t>(context_n_);
  std::size_t have = std::min(context.size(), n);
  for (std::size_t slot = 0; slot < n; ++slot) {
    // slot 0 holds the most recent token
    std::uint64_t v = kBosSlot;
    if (slot < have) {
      TokenId t = context[context.size() - 1 - slot];
      if (t < 0 || t >= static_cast<TokenId>(kBosSlot))
        throw std::out_of_range(fmt::format("token id {} outside the toy context range", t));
      v = static_cast<std::uint64_t>(t);
    }
    key |= v << (16 * slot);
  }
  return key;
}

ContextKey ToyPolicy::key_at(std::span<const TokenId> stream, std::size_t pos) const {
  std::size_t n = static_cast<std::size_t>(context_n_);
  std::size_t begin = pos > n ? pos - n : 0;
  return key_of(stream.subspan(begin, pos - begin));
}

std::vector<double> ToyPolicy::row(ContextKey key) const {
  if (auto it = table_.find(key); it != table_.end()) return it->second;
  return std::vector<double>(static_cast<std::size_t>(vocab_), 0.0);
}

std::vector<double>& ToyPolicy::mutable_row(ContextKey key) {
  auto [it, inserted] = table_.try_emplace(key);
  if (inserted) it->second.assign(static_cast<std::size_t>(vocab_), 0.0);
  return it->second;
}

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  std::vector<double> out(logits.size());
  double mx = -INFINITY;
  for (double l : logits) mx = std::max(mx, l / temperature);
  double sum = 0;
  for (double l : logits) sum += std::exp(l / temperature - mx);
  double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / temperature - lse;
  return out;
}

std::vector<double> ToyPolicy::logprobs(ContextKey key, double temperature) const {
  auto r = row(key);
  return log_softmax(r, temperature);
}

std::vector<double> ToyPolicy::probs(ContextKey key, double temperature) const {
  auto lp = logprobs(key, temperature);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double exact_kl(const ToyPolicy& theta, const ToyPolicy& ref, ContextKey key, double temperature) {
  auto lt = theta.logprobs(key, temperature);
  auto lr = ref.logprobs(key, temperature);
  double kl = 0;
  for (std::size_t i = 0; i < lt.size(); ++i) kl += std::exp(lt[i]) * (lt[i] - lr[i]);
  return kl;
}

TokenStream make_stream(const Trajectory& trajectory, const Tokenizer& tokenizer, double advantage) {
  TokenStream s;
  s.mask = build_mask(trajectory.segments, tokenizer);
  s.tokens = flatten_tokens(trajectory.segments);
  s.old_logprobs.assign(s.tokens.size(), 0.0);
  s.advantages.assign(s.tokens.size(), 0.0);
  std::size_t k = 0;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (!s.mask[i]) continue;
    if (k >= trajectory.behavior_logprobs.size())
      throw MaskMismatch("fewer behavior logprobs than model tokens");
    s.old_logprobs[i] = trajectory.behavior_logprobs[k++];
    s.advantages[i] = advantage;
  }
  if (k != trajectory.behavior_logprobs.size()) throw MaskMismatch("more behavior logprobs than model tokens");
  return s;
}

LossReport grpo_objective(std::span<const TokenStream> streams, const ToyPolicy& policy, const ToyPolicy& ref,
                          const GrpoConfig& cfg) {
  LossReport report;
  if (streams.empty()) return report;
  const double T = cfg.temperature;
  const double w = 1.0 / static_cast<double>(streams.size());
  const std::size_t V = static_cast<std::size_t>(policy.vocab());

  for (const auto& s : streams) {
    const std::size_t n = s.tokens.size();
    if (s.mask.size() != n || s.old_logprobs.size() != n || s.advantages.size() != n)
      throw MaskMismatch(fmt::format("stream arrays disagree: {} tokens, {} mask, {} old logprobs, {} advantages", n,
                                     s.mask.size(), s.old_logprobs.size(), s.advantages.size()));
    std::vector<std::size_t> positions;
    for (std::size_t t = 0; t < n; ++t)
      if (s.mask[t]) positions.push_back(t);
    report.per_token_terms.emplace_back();
    const std::size_t m = positions.size();
    if (m == 0) continue;
    report.model_tokens += m;
    const double len = cfg.length_normalization == LengthNorm::UnmaskedTokens ? static_cast<double>(m)
                                                                               : static_cast<double>(n);
    double surrogate = 0, kl = 0;
    for (std::size_t t : positions) {
      const TokenId tok = s.tokens[t];
      if (tok < 0 || static_cast<std::size_t>(tok) >= V)
        throw MaskMismatch(fmt::format("model token {} outside the policy vocabulary", tok));
      const ContextKey key = policy.key_at(s.tokens, t);
      const auto lp = policy.logprobs(key, T);
      const double l_theta = lp[static_cast<std::size_t>(tok)];
      const double l_old = cfg.old_policy == OldPolicy::Behavior ? s.old_logprobs[t] : l_theta;
      const double l_ref = ref.logprobs(key, T)[static_cast<std::size_t>(tok)];
      const double a = s.advantages[t];

      const double ratio = std::exp(l_theta - l_old);
      const double clipped = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
      const double term = std::min(ratio * a, clipped * a);
      const double dterm = ratio * a <= clipped * a ? ratio * a : 0.0;
      const double k3 = kl_term(l_theta, l_ref);
      const double dk3 = 1.0 - std::exp(l_ref - l_theta);
      report.per_token_terms.back().push_back(term);
      surrogate += term;
      kl += k3;

      const double g = w * (dterm / len - cfg.beta * dk3 / static_cast<double>(m));
      if (g == 0.0) continue;
      auto [it, inserted] = report.gradient.try_emplace(key);
      if (inserted) it->second.assign(V, 0.0);
      auto& grow = it->second;
      for (std::size_t u = 0; u < V; ++u) {
        const double onehot = u == static_cast<std::size_t>(tok) ? 1.0 : 0.0;
        grow[u] += g * (onehot - std::exp(lp[u])) / T;
      }
    }
    report.surrogate += w * surrogate / len;
    report.kl_value += w * kl / static_cast<double>(m);
  }
  report.objective = report.surrogate - cfg.beta * report.kl_value;
  return report;
}

void apply_update(ToyPolicy& policy, const LogitRows& gradient, double learning_rate) {
  for (const auto& [key, g] : gradient) {
    if (g.size() != static_cast<std::size_t>(policy.vocab()))
      throw std::invalid_argument("gradient row does not match the policy vocabulary");
    for (double v : g)
      if (!std::isfinite(v)) throw NonFiniteGradient(fmt::format("non-finite gradient in context {:#x}", key));
  }
  for (const auto& [key, g] : gradient) {
    auto& row = policy.mutable_row(key);
    for (std::size_t u = 0; u < g.size(); ++u) row[u] += learning_rate * g[u];
  }
  ++policy.version;
}

}  // namespace toolr1
