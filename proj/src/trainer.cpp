// SPDX-License-Identifier: Apache-2.0
#include "toolr1/trainer.hpp"

#include "toolr1/store.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace toolr1 {

void QueueConfig::validate() const {
  if (!(g > 0 && g < G)) throw std::invalid_argument(fmt::format("queue: need 0 < g < G (g={}, G={})", g, G));
  if (!(pass_lo >= 0 && pass_lo < pass_hi && pass_hi <= 1))
    throw std::invalid_argument(fmt::format("queue: need 0 <= pass_lo < pass_hi <= 1 ({}, {})", pass_lo, pass_hi));
}

bool is_pass(const Trajectory& t) { return t.reward && t.reward->judgment == Judgment::Correct; }

void TrajectoryQueue::require_rewards(const std::vector<Trajectory>& fresh) const {
  for (const auto& t : fresh)
    if (!t.reward) throw std::invalid_argument("queue " + qid_ + ": trajectory without a cached reward");
}

void TrajectoryQueue::warm_up(std::vector<Trajectory> fresh) {
  if (!entries_.empty()) throw std::logic_error("queue " + qid_ + ": warm-up on a non-empty queue");
  if (fresh.size() != capacity_)
    throw WrongRoundSize(fmt::format("queue {}: warm-up needs {} trajectories, got {}", qid_, capacity_, fresh.size()));
  require_rewards(fresh);
  for (auto& t : fresh) entries_.push_back(std::move(t));
  inserted_ += capacity_;
  ++rounds_;
}

void TrajectoryQueue::push_round(std::vector<Trajectory> fresh, std::size_t g) {
  if (!full()) throw std::logic_error("queue " + qid_ + ": push_round before warm-up");
  if (g == 0 || g >= capacity_ || fresh.size() != g)
    throw WrongRoundSize(fmt::format("queue {}: round of {} with g={}, G={}", qid_, fresh.size(), g, capacity_));
  require_rewards(fresh);
  for (std::size_t i = 0; i < g; ++i) entries_.pop_front();
  for (auto& t : fresh) entries_.push_back(std::move(t));
  inserted_ += g;
  evicted_ += g;
  ++rounds_;
}

double TrajectoryQueue::pass_rate() const {
  if (entries_.empty()) return 0;
  auto passes = std::count_if(entries_.begin(), entries_.end(), is_pass);
  return static_cast<double>(passes) / static_cast<double>(entries_.size());
}

TrajectoryQueue TrajectoryQueue::restore(std::string question_id, std::size_t capacity, std::deque<Trajectory> entries,
                                         std::size_t inserted, std::size_t evicted, std::size_t rounds) {
  if (entries.size() > capacity) throw std::invalid_argument("queue " + question_id + ": more entries than capacity");
  TrajectoryQueue q(std::move(question_id), capacity);
  q.entries_ = std::move(entries);
  q.inserted_ = inserted;
  q.evicted_ = evicted;
  q.rounds_ = rounds;
  return q;
}

Selection select_queue_indices(const std::vector<bool>& eligible, std::size_t batch_size, Rng& rng) {
  const std::size_t n = eligible.size();
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < n; ++i)
    if (eligible[i]) pool.push_back(i);
  if (pool.empty()) throw NoEligibleQueues("no queue has a pass rate inside the band");

  // Uniform batch of distinct indices (partial Fisher-Yates), then with
  // replacement once every index is drawn.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Selection sel;
  for (std::size_t k = 0; k < batch_size; ++k) {
    if (k < n) {
      std::size_t j = k + rng.below(n - k);
      std::swap(perm[k], perm[j]);
      sel.indices.push_back(perm[k]);
    } else {
      sel.indices.push_back(rng.below(n));
    }
  }

  std::multiset<std::size_t> in_batch(sel.indices.begin(), sel.indices.end());
  for (auto& idx : sel.indices) {
    if (eligible[idx]) continue;
    in_batch.erase(in_batch.find(idx));
    std::vector<std::size_t> free;
    for (auto p : pool)
      if (!in_batch.count(p)) free.push_back(p);
    const auto& from = free.empty() ? pool : free;
    idx = from[rng.below(from.size())];
    in_batch.insert(idx);
    ++sel.replacements;
  }
  return sel;
}

std::vector<Group> select_groups(const std::vector<const TrajectoryQueue*>& queues, std::size_t batch_size,
                                 const QueueConfig& cfg, Rng& rng, std::size_t* replacements) {
  std::vector<bool> eligible(queues.size());
  for (std::size_t i = 0; i < queues.size(); ++i) {
    const double rate = queues[i]->pass_rate();
    eligible[i] = queues[i]->full() && rate >= cfg.pass_lo && rate <= cfg.pass_hi;
  }
  const auto n_eligible = static_cast<std::size_t>(std::count(eligible.begin(), eligible.end(), true));
  Selection sel = select_queue_indices(eligible, batch_size == 0 ? n_eligible : batch_size, rng);
  if (replacements) *replacements = sel.replacements;

  std::vector<Group> groups;
  groups.reserve(sel.indices.size());
  for (auto idx : sel.indices) {
    const auto& q = *queues[idx];
    Group g;
    g.question_id = q.question_id();
    for (const auto& t : q.entries()) {
      g.trajectories.push_back(&t);
      g.rewards.push_back(t.reward->total);
    }
    g.advantages = normalize_advantages(g.rewards);
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<Trajectory> run_rollouts(const std::vector<EpisodeJob>& jobs, const RolloutEnv& env) {
  std::vector<Trajectory> out(jobs.size());
  const EpisodeDeps deps{env.policy, env.tools, env.system_prompt, env.executors};
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        out[i] = run_episode(jobs[i].input, deps, env.episode, jobs[i].seed);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(jobs.size());
        return;
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(std::max(env.workers, 1), jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < n_threads; ++k) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
  for (auto& t : out) t.reward = score_trajectory(t, env.judge, env.reward);
  return out;
}

EpisodeInput to_input(const DatasetItem& item) {
  std::string question = item.question;
  if (item.file) question += "\nAttached file: " + *item.file;
  return {item.question_id, std::move(question), item.ground_truth};
}

std::vector<DatasetItem> FilterReport::kept() const {
  std::vector<DatasetItem> out;
  for (const auto& r : items)
    if (r.kept) out.push_back(r.item);
  return out;
}

FilterReport difficulty_filter(const std::vector<DatasetItem>& dataset, const RolloutEnv& env, int n, double lo,
                               double hi, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("difficulty_filter: n must be >= 1");
  std::vector<EpisodeJob> jobs;
  for (const auto& item : dataset)
    for (int j = 0; j < n; ++j)
      jobs.push_back({to_input(item), derive_seed(seed, "filter", {fnv1a(item.question_id), std::uint64_t(j)})});
  auto results = run_rollouts(jobs, env);

  FilterReport report;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    FilterItemReport r{dataset[i], {}, 0, false};
    int passes = 0;
    for (int j = 0; j < n; ++j) {
      const bool pass = is_pass(results[i * n + j]);
      r.outcomes.push_back(pass);
      passes += pass;
    }
    r.pass_rate = static_cast<double>(passes) / n;
    r.kept = r.pass_rate >= lo && r.pass_rate <= hi;
    report.items.push_back(std::move(r));
  }
  return report;
}

// --- Trainer ---

Trainer::Trainer(TrainerConfig cfg, std::vector<DatasetItem> dataset, ToyPolicy initial,
                 std::shared_ptr<const ToyCodec> codec, const ToolRegistry& tools, std::string system_prompt,
                 AnswerJudge& judge)
    : cfg_(std::move(cfg)),
      dataset_(std::move(dataset)),
      policy_(std::make_shared<ToyPolicy>(initial)),
      ref_(std::move(initial)),
      codec_(std::move(codec)),
      tools_(tools),
      system_prompt_(std::move(system_prompt)),
      judge_(judge) {
  cfg_.queue.validate();
  cfg_.grpo.temperature = cfg_.episode.temperature;
  if (dataset_.empty()) throw std::invalid_argument("trainer: empty dataset");
  for (const auto& item : dataset_)
    if (!queues_.emplace(item.question_id, TrajectoryQueue(item.question_id, cfg_.queue.G)).second)
      throw std::invalid_argument("trainer: duplicate question_id " + item.question_id);
}

RolloutEnv Trainer::env(const SamplingPolicy& agent) const {
  return RolloutEnv{agent, tools_, system_prompt_, judge_, cfg_.episode, cfg_.reward, nullptr, cfg_.workers};
}

std::vector<std::vector<Trajectory>> Trainer::rollout_all(std::size_t count, std::uint64_t round) {
  // Sessions read a frozen copy so the update can never race a rollout.
  ToyAgentPolicy agent(std::make_shared<const ToyPolicy>(*policy_), codec_);
  std::vector<EpisodeJob> jobs;
  for (const auto& item : dataset_)
    for (std::size_t j = 0; j < count; ++j)
      jobs.push_back({to_input(item), derive_seed(cfg_.seed, "rollout", {fnv1a(item.question_id), round, j})});
  auto flat = run_rollouts(jobs, env(agent));
  std::vector<std::vector<Trajectory>> out(dataset_.size());
  for (std::size_t i = 0; i < dataset_.size(); ++i)
    for (std::size_t j = 0; j < count; ++j) out[i].push_back(std::move(flat[i * count + j]));
  return out;
}

void Trainer::warm_up() {
  if (warmed_) return;
  auto rounds = rollout_all(cfg_.queue.G, 0);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    for (const auto& t : rounds[i]) sum += t.reward->total, ++n;
    queues_.at(dataset_[i].question_id).warm_up(std::move(rounds[i]));
  }
  warmup_mean_ = sum / static_cast<double>(n);
  warmed_ = true;
}

MetricsRow Trainer::train_step() {
  warm_up();
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t step = step_ + 1;
  MetricsRow row;
  row.step = step;

  auto rounds = rollout_all(cfg_.queue.g, static_cast<std::uint64_t>(step));
  double sum = 0, ra = 0, rp = 0, re = 0;
  std::size_t passes = 0;
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    for (const auto& t : rounds[i]) {
      sum += t.reward->total;
      ra += t.reward->r_answer;
      rp += t.reward->r_parse;
      re += t.reward->r_exec;
      passes += is_pass(t);
      ++row.fresh_episodes;
    }
    queues_.at(dataset_[i].question_id).push_round(std::move(rounds[i]), cfg_.queue.g);
  }
  const double nf = static_cast<double>(row.fresh_episodes);
  row.fresh_per_question = cfg_.queue.g;
  row.mean_fresh_reward = sum / nf;
  row.fresh_pass_rate = static_cast<double>(passes) / nf;
  row.r_answer_mean = ra / nf;
  row.r_parse_mean = rp / nf;
  row.r_exec_mean = re / nf;

  row.pass_rate_histogram.assign(10, 0);
  std::vector<const TrajectoryQueue*> qs;
  for (const auto& item : dataset_) {
    const auto& q = queues_.at(item.question_id);
    qs.push_back(&q);
    row.pass_rate_histogram[std::min<std::size_t>(9, static_cast<std::size_t>(q.pass_rate() * 10))]++;
  }

  step_ = step;
  Rng rng(derive_seed(cfg_.seed, "select", {static_cast<std::uint64_t>(step)}));
  std::vector<Group> groups;
  try {
    groups = select_groups(qs, cfg_.batch_size, cfg_.queue, rng, &row.replacements);
  } catch (const NoEligibleQueues& e) {
    row.skipped = true;
    row.skip_reason = e.what();
  }

  if (!row.skipped) {
    std::vector<TokenStream> streams;
    std::vector<double> group_rewards;
    for (const auto& g : groups) {
      for (std::size_t k = 0; k < g.trajectories.size(); ++k) {
        group_rewards.push_back(g.rewards[k]);
        if (g.trajectories[k]->failed) continue;
        streams.push_back(make_stream(*g.trajectories[k], *codec_, g.advantages[k]));
      }
    }
    row.groups = groups.size();
    row.trajectories_consumed = streams.size();
    const double mean = std::accumulate(group_rewards.begin(), group_rewards.end(), 0.0) / group_rewards.size();
    double var = 0;
    for (double r : group_rewards) var += (r - mean) * (r - mean);
    row.mean_group_reward = mean;
    row.std_group_reward = std::sqrt(var / group_rewards.size());
    if (streams.empty()) {
      row.skipped = true;
      row.skip_reason = "every selected trajectory failed";
    } else {
      auto report = grpo_objective(streams, *policy_, ref_, cfg_.grpo);
      apply_update(*policy_, report.gradient, cfg_.grpo.learning_rate);
      row.objective = report.objective;
      row.kl_value = report.kl_value;
    }
  }
  row.policy_version = policy_->version;
  row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::string Trainer::checkpoint() const {
  Json qs = Json::array();
  for (const auto& item : dataset_) {
    const auto& q = queues_.at(item.question_id);
    Json entries = Json::array();
    for (const auto& t : q.entries()) entries.push_back(trajectory_to_json(t));
    qs.push_back({{"question_id", q.question_id()},
                  {"capacity", q.capacity()},
                  {"inserted", q.inserted()},
                  {"evicted", q.evicted()},
                  {"rounds", q.rounds()},
                  {"entries", entries}});
  }
  Json ids = Json::array();
  for (const auto& item : dataset_) ids.push_back(item.question_id);
  Json j = {{"format", "toolr1-trainer-1"},
            {"seed", cfg_.seed},
            {"G", cfg_.queue.G},
            {"g", cfg_.queue.g},
            {"question_ids", ids},
            {"step", step_},
            {"warmed_up", warmed_},
            {"warmup_mean_reward", warmup_mean_},
            {"policy", policy_to_json(*policy_)},
            {"reference", policy_to_json(ref_)},
            {"queues", qs}};
  return j.dump();
}

void Trainer::restore(const std::string& checkpoint_json) {
  const Json j = Json::parse(checkpoint_json);
  if (j.at("format") != "toolr1-trainer-1") throw std::invalid_argument("checkpoint: unknown format");
  if (j.at("seed").get<std::uint64_t>() != cfg_.seed || j.at("G").get<std::size_t>() != cfg_.queue.G ||
      j.at("g").get<std::size_t>() != cfg_.queue.g)
    throw std::invalid_argument("checkpoint: seed or queue sizes differ from the configuration");
  std::vector<std::string> ids;
  for (const auto& item : dataset_) ids.push_back(item.question_id);
  if (j.at("question_ids").get<std::vector<std::string>>() != ids)
    throw std::invalid_argument("checkpoint: dataset differs from the one it was written with");

  std::map<std::string, TrajectoryQueue> queues;
  for (const auto& q : j.at("queues")) {
    std::deque<Trajectory> entries;
    for (const auto& t : q.at("entries")) entries.push_back(trajectory_from_json(t));
    auto qid = q.at("question_id").get<std::string>();
    queues.emplace(qid, TrajectoryQueue::restore(qid, q.at("capacity").get<std::size_t>(), std::move(entries),
                                                 q.at("inserted").get<std::size_t>(),
                                                 q.at("evicted").get<std::size_t>(), q.at("rounds").get<std::size_t>()));
  }
  auto policy = policy_from_json(j.at("policy"));
  ref_ = policy_from_json(j.at("reference"));
  *policy_ = std::move(policy);
  queues_ = std::move(queues);
  step_ = j.at("step").get<std::int64_t>();
  warmed_ = j.at("warmed_up").get<bool>();
  warmup_mean_ = j.at("warmup_mean_reward").get<double>();
}

}  // namespace toolr1
