// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "toolr1/grpo.hpp"
#include "toolr1/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

using namespace toolr1;

namespace {

constexpr TokenId kEnvToken = 100;

double row_value(const LogitRows& rows, ContextKey key, std::size_t u) {
  auto it = rows.find(key);
  return it == rows.end() ? 0.0 : it->second[u];
}

// Random streams over a small vocabulary with ENV tokens interleaved and old
// logprobs jittered around the current policy so some ratios land in the clip region.
std::vector<TokenStream> random_group(const ToyPolicy& policy, std::size_t G, Rng& rng, double T) {
  std::vector<TokenStream> out;
  std::vector<double> rewards;
  for (std::size_t i = 0; i < G; ++i) rewards.push_back(rng.uniform() * 1.6);
  auto adv = normalize_advantages(rewards);
  for (std::size_t i = 0; i < G; ++i) {
    TokenStream s;
    std::size_t n = 3 + rng.below(6);
    for (std::size_t t = 0; t < n; ++t) {
      bool env = rng.uniform() < 0.3;
      s.tokens.push_back(env ? kEnvToken : static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(policy.vocab()))));
      s.mask.push_back(env ? 0 : 1);
      double lp = env ? 0.0 : policy.logprobs(policy.key_at(s.tokens, t), T)[static_cast<std::size_t>(s.tokens[t])];
      s.old_logprobs.push_back(lp + (rng.uniform() - 0.5) * 0.8);
      s.advantages.push_back(adv[i]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ToyPolicy random_policy(int vocab, Rng& rng, std::size_t contexts) {
  ToyPolicy p(vocab, 2);
  for (std::size_t c = 0; c < contexts; ++c) {
    std::vector<TokenId> ctx{static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab))),
                             rng.uniform() < 0.3 ? kEnvToken : static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab)))};
    auto& row = p.mutable_row(p.key_of(ctx));
    for (auto& v : row) v = rng.uniform() * 2 - 1;
  }
  return p;
}

// Max relative error of the analytic gradient against central differences.
double fd_error(std::span<const TokenStream> streams, const ToyPolicy& policy, const ToyPolicy& ref,
                const GrpoConfig& cfg) {
  const double h = 1e-5;
  auto analytic = grpo_objective(streams, policy, ref, cfg).gradient;
  // Every context any stream position reads from.
  std::set<ContextKey> keys;
  for (const auto& s : streams)
    for (std::size_t t = 0; t < s.tokens.size(); ++t) keys.insert(policy.key_at(s.tokens, t));
  double worst = 0;
  for (ContextKey key : keys) {
    for (std::size_t u = 0; u < static_cast<std::size_t>(policy.vocab()); ++u) {
      ToyPolicy plus = policy, minus = policy;
      plus.mutable_row(key)[u] += h;
      minus.mutable_row(key)[u] -= h;
      double fd = (grpo_objective(streams, plus, ref, cfg).objective - grpo_objective(streams, minus, ref, cfg).objective) /
                  (2 * h);
      double a = row_value(analytic, key, u);
      double scale = std::max({std::abs(a), std::abs(fd), 1e-4});
      worst = std::max(worst, std::abs(a - fd) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("advantage normalization examples") {
  std::vector<double> two{1.6, 0.6};
  auto a = normalize_advantages(two);
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-12));
  std::vector<double> flat{1.0, 1.0, 1.0, 1.0};
  CHECK(normalize_advantages(flat) == std::vector<double>{0, 0, 0, 0});
  // 0.8 summed eight times is not exactly 6.4, so the mean carries a residue.
  std::vector<double> residue(8, 0.8);
  CHECK(normalize_advantages(residue) == std::vector<double>(8, 0.0));
  std::vector<double> one{1.0};
  CHECK_THROWS_AS(normalize_advantages(one), GroupTooSmall);
}

TEST_CASE("advantage normalization matches a reference computation") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(16);
    for (auto& v : r) v = rng.uniform() * 1.6;
    double mean = 0;
    for (double v : r) mean += v;
    mean /= 16;
    double var = 0;
    for (double v : r) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / 16);
    auto a = normalize_advantages(r);
    double am = 0, av = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::abs(a[i] - (r[i] - mean) / sd) < 1e-12);
      am += a[i];
    }
    am /= 16;
    for (double v : a) av += (v - am) * (v - am);
    CHECK(std::abs(am) < 1e-9);
    CHECK(std::abs(std::sqrt(av / 16) - 1.0) < 1e-9);
  }
}

TEST_CASE("token_term examples") {
  CHECK(token_term(0.0, 0.0, 1.0, 0.2) == 1.0);
  CHECK(token_term(std::log(1.5), 0.0, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(token_term(std::log(0.5), 0.0, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-12));
  // Unclipped branch is kept when it is smaller.
  CHECK(token_term(std::log(0.5), 0.0, 1.0, 0.2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(token_term(std::log(1.5), 0.0, -1.0, 0.2) == doctest::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("k3 estimator") {
  CHECK(kl_term(-1.3, -1.3) == 0.0);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) CHECK(kl_term(-rng.uniform() * 10, -rng.uniform() * 10) >= 0.0);
}

TEST_CASE("sampled k3 approaches the exact KL") {
  Rng rng(21);
  ToyPolicy theta(5, 1), ref(5, 1);
  const ContextKey key = theta.key_of(std::vector<TokenId>{});
  theta.mutable_row(key) = {1.0, -0.5, 0.3, 0.0, -1.2};
  ref.mutable_row(key) = {0.2, 0.4, -0.3, 0.1, 0.5};
  const double T = 0.6;
  auto p = theta.probs(key, T);
  auto lt = theta.logprobs(key, T), lr = ref.logprobs(key, T);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    auto u = rng.categorical(p);
    double k = kl_term(lt[u], lr[u]);
    sum += k;
    sq += k * k;
  }
  double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
  double exact = exact_kl(theta, ref, key, T);
  CHECK(exact > 0.0);
  CHECK(std::abs(mean - exact) < 5 * se);
}

TEST_CASE("objective degenerate cases") {
  ToyPolicy policy(5, 2), ref(5, 2);
  GrpoConfig cfg;
  cfg.beta = 0;
  TokenStream s{{kEnvToken, 2, 3}, {0, 1, 1}, {0, 0, 0}, {0, 0, 0}};
  for (std::size_t t = 1; t < 3; ++t)
    s.old_logprobs[t] = policy.logprobs(policy.key_at(s.tokens, t), cfg.temperature)[static_cast<std::size_t>(s.tokens[t])];
  std::vector<TokenStream> g{s, s};
  auto zero = grpo_objective(g, policy, ref, cfg);
  CHECK(zero.objective == 0.0);
  for (const auto& [k, row] : zero.gradient)
    for (double v : row) CHECK(v == 0.0);

  TokenStream one{{kEnvToken, 1}, {0, 1}, {0, 0}, {0, 1.0}};
  one.old_logprobs[1] = policy.logprobs(policy.key_at(one.tokens, 1), cfg.temperature)[1];
  std::vector<TokenStream> single{one};
  CHECK(grpo_objective(single, policy, ref, cfg).objective == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(77);
  const double T = 0.6;
  SUBCASE("four trajectories on a five-symbol policy") {
    auto policy = random_policy(5, rng, 10);
    auto ref = random_policy(5, rng, 10);
    GrpoConfig cfg;
    cfg.beta = 0.05;
    cfg.temperature = T;
    auto g = random_group(policy, 4, rng, T);
    CHECK(fd_error(g, policy, ref, cfg) < 1e-4);
  }
  SUBCASE("random small instances") {
    for (std::size_t G : {2, 4, 8}) {
      for (int trial = 0; trial < 3; ++trial) {
        int vocab = 2 + static_cast<int>(rng.below(7));
        auto policy = random_policy(vocab, rng, 1 + rng.below(16));
        auto ref = random_policy(vocab, rng, 4);
        GrpoConfig cfg;
        cfg.beta = 0.01;
        cfg.temperature = T;
        cfg.length_normalization = trial == 2 ? LengthNorm::AllTokens : LengthNorm::UnmaskedTokens;
        auto g = random_group(policy, G, rng, T);
        CAPTURE(G);
        CAPTURE(vocab);
        CHECK(fd_error(g, policy, ref, cfg) < 1e-4);
      }
    }
  }
}

TEST_CASE("masked positions never reach the objective") {
  Rng rng(3);
  auto policy = random_policy(5, rng, 8);
  auto ref = random_policy(5, rng, 8);
  GrpoConfig cfg;
  cfg.beta = 0.02;
  auto g = random_group(policy, 4, rng, cfg.temperature);
  auto base = grpo_objective(g, policy, ref, cfg);
  for (auto& s : g)
    for (std::size_t t = 0; t < s.tokens.size(); ++t)
      if (!s.mask[t]) {
        s.advantages[t] = 1e9;
        s.old_logprobs[t] = -1e9;
      }
  auto poisoned = grpo_objective(g, policy, ref, cfg);
  CHECK(poisoned.objective == base.objective);
  CHECK(poisoned.gradient == base.gradient);
}

TEST_CASE("clip dead zone has exactly zero gradient") {
  ToyPolicy policy(4, 2), ref(4, 2);
  GrpoConfig cfg;
  cfg.beta = 0;
  auto lp = [&](const TokenStream& s) {
    return policy.logprobs(policy.key_at(s.tokens, 1), cfg.temperature)[static_cast<std::size_t>(s.tokens[1])];
  };
  TokenStream up{{kEnvToken, 2}, {0, 1}, {0, 0}, {0, 1.0}};
  up.old_logprobs[1] = lp(up) - 0.5;  // ratio e^0.5 > 1.2
  TokenStream down{{kEnvToken, 3}, {0, 1}, {0, 0}, {0, -1.0}};
  down.old_logprobs[1] = lp(down) + 0.5;  // ratio e^-0.5 < 0.8
  for (const auto& s : {up, down}) {
    std::vector<TokenStream> g{s};
    auto r = grpo_objective(g, policy, ref, cfg);
    for (const auto& [k, row] : r.gradient)
      for (double v : row) CHECK(v == 0.0);
  }
}

TEST_CASE("zero-variance group with beta 0 leaves the policy unchanged") {
  Rng rng(4);
  auto policy = random_policy(5, rng, 6);
  GrpoConfig cfg;
  cfg.beta = 0;
  std::vector<double> flat{0.6, 0.6, 0.6, 0.6};
  auto adv = normalize_advantages(flat);
  auto g = random_group(policy, 4, rng, cfg.temperature);
  for (std::size_t i = 0; i < g.size(); ++i) std::fill(g[i].advantages.begin(), g[i].advantages.end(), adv[i]);
  auto before = policy;
  apply_update(policy, grpo_objective(g, policy, policy, cfg).gradient, 0.5);
  CHECK(policy.table() == before.table());
  CHECK(policy.version == before.version + 1);
}

TEST_CASE("apply_update") {
  ToyPolicy p(3, 1);
  auto key = p.key_of(std::vector<TokenId>{1});
  p.mutable_row(key) = {0.1, 0.2, 0.3};
  auto before = p;
  apply_update(p, {}, 0.5);
  CHECK(p.table() == before.table());
  CHECK(p.version == 1);

  apply_update(p, {{key, {0, 1, 0}}}, 0.25);
  CHECK(p.row(key) == std::vector<double>{0.1, 0.2 + 0.25, 0.3});
  CHECK(p.version == 2);

  auto snapshot = p;
  CHECK_THROWS_AS(apply_update(p, {{key, {0, std::numeric_limits<double>::quiet_NaN(), 0}}}, 0.5), NonFiniteGradient);
  CHECK_THROWS_AS(apply_update(p, {{key, {0, std::numeric_limits<double>::infinity(), 0}}}, 0.5), NonFiniteGradient);
  CHECK(p == snapshot);
}

TEST_CASE("mask mismatch is rejected") {
  ToyPolicy p(3, 2);
  GrpoConfig cfg;
  std::vector<TokenStream> bad{{{1, 2}, {1}, {0, 0}, {0, 0}}};
  CHECK_THROWS_AS(grpo_objective(bad, p, p, cfg), MaskMismatch);
  std::vector<TokenStream> out_of_vocab{{{7}, {1}, {0}, {1}}};
  CHECK_THROWS_AS(grpo_objective(out_of_vocab, p, p, cfg), MaskMismatch);
}

TEST_CASE("bandit ascent concentrates on the rewarded symbol") {
  ToyPolicy policy(4, 1);
  const ContextKey key = policy.key_of(std::vector<TokenId>{});
  GrpoConfig cfg;
  cfg.beta = 0;
  cfg.temperature = 1.0;
  Rng rng(2024);
  int reached = -1;
  for (int step = 0; step < 200; ++step) {
    auto p = policy.probs(key, cfg.temperature);
    if (p[0] > 0.9) {
      reached = step;
      break;
    }
    std::vector<TokenId> picks;
    std::vector<double> rewards;
    for (int i = 0; i < 8; ++i) {
      auto u = static_cast<TokenId>(rng.categorical(p));
      picks.push_back(u);
      rewards.push_back(u == 0 ? 1.0 : 0.0);
    }
    std::vector<double> adv(8, 0.0);
    if (std::any_of(rewards.begin(), rewards.end(), [&](double r) { return r != rewards[0]; }))
      adv = normalize_advantages(rewards);
    std::vector<TokenStream> g;
    auto lp = policy.logprobs(key, cfg.temperature);
    for (int i = 0; i < 8; ++i)
      g.push_back({{picks[i]}, {1}, {lp[static_cast<std::size_t>(picks[i])]}, {adv[i]}});
    auto report = grpo_objective(g, policy, policy, cfg);

    // Closed form at ratio 1: mean over the group of A_i (e_{k_i} - p) / T.
    for (std::size_t u = 0; u < 4; ++u) {
      double expect = 0;
      for (int i = 0; i < 8; ++i) expect += adv[i] * ((picks[i] == static_cast<TokenId>(u) ? 1.0 : 0.0) - p[u]) / 8.0;
      CHECK(std::abs(row_value(report.gradient, key, u) - expect) < 1e-12);
    }
    apply_update(policy, report.gradient, 0.5);
  }
  CHECK(reached >= 0);
  CHECK(policy.probs(key, 1.0)[0] > 0.9);
}
