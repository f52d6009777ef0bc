// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toolr1/episode.hpp"
#include "toolr1/grpo.hpp"
#include "toolr1/reward.hpp"
#include "toolr1/toy_agent.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace toolr1 {

struct DatasetItem {
  std::string question_id;
  std::string question;
  std::string ground_truth;
  std::optional<std::string> file;
  std::string source;
  std::optional<std::string> level;

  friend bool operator==(const DatasetItem&, const DatasetItem&) = default;
};

struct QueueConfig {
  std::size_t G = 16;
  std::size_t g = 8;
  double pass_lo = 0.2;
  double pass_hi = 0.8;

  /// Throws std::invalid_argument unless 0 < g < G and 0 <= lo < hi <= 1.
  void validate() const;
};

struct WrongRoundSize : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NoEligibleQueues : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A pass is a cached Correct judgment; Partially Correct does not count.
bool is_pass(const Trajectory& t);

/// Per-question FIFO of the most recent trajectories.
class TrajectoryQueue {
 public:
  TrajectoryQueue() = default;
  TrajectoryQueue(std::string question_id, std::size_t capacity) : qid_(std::move(question_id)), capacity_(capacity) {}

  /// First fill of an empty queue with exactly G trajectories.
  void warm_up(std::vector<Trajectory> fresh);
  /// Evicts the g oldest entries and appends g new ones.
  void push_round(std::vector<Trajectory> fresh, std::size_t g);

  double pass_rate() const;
  bool full() const { return entries_.size() == capacity_; }

  const std::string& question_id() const { return qid_; }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Trajectory>& entries() const { return entries_; }
  std::size_t inserted() const { return inserted_; }
  std::size_t evicted() const { return evicted_; }
  std::size_t rounds() const { return rounds_; }

  /// Rebuilds a queue from stored state.
  static TrajectoryQueue restore(std::string question_id, std::size_t capacity, std::deque<Trajectory> entries,
                                 std::size_t inserted, std::size_t evicted, std::size_t rounds);

 private:
  void require_rewards(const std::vector<Trajectory>& fresh) const;

  std::string qid_;
  std::size_t capacity_ = 16;
  std::deque<Trajectory> entries_;
  std::size_t inserted_ = 0;
  std::size_t evicted_ = 0;
  std::size_t rounds_ = 0;
};

/// Draws batch_size distinct queue indices uniformly; every drawn index that
/// is not eligible is replaced by a uniformly drawn eligible index not yet in
/// the batch (duplicates only once the eligible pool is exhausted).
/// Throws NoEligibleQueues when nothing is eligible.
struct Selection {
  std::vector<std::size_t> indices;
  std::size_t replacements = 0;
};
Selection select_queue_indices(const std::vector<bool>& eligible, std::size_t batch_size, Rng& rng);

struct Group {
  std::string question_id;
  std::vector<const Trajectory*> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// Groups from the selected queues with advantages over their cached totals.
/// batch_size 0 selects every eligible queue once.
std::vector<Group> select_groups(const std::vector<const TrajectoryQueue*>& queues, std::size_t batch_size,
                                 const QueueConfig& cfg, Rng& rng, std::size_t* replacements = nullptr);

/// Everything needed to run and score episodes.
struct RolloutEnv {
  const SamplingPolicy& policy;
  const ToolRegistry& tools;
  const std::string& system_prompt;
  AnswerJudge& judge;
  EpisodeConfig episode;
  RewardConfig reward;
  const ExecutorFactory* executors = nullptr;
  int workers = 1;
};

struct EpisodeJob {
  EpisodeInput input;
  std::uint64_t seed = 0;
};

/// Runs jobs on up to `workers` threads; results keep job order. Rewards are
/// judged after all episodes finish, in job order.
std::vector<Trajectory> run_rollouts(const std::vector<EpisodeJob>& jobs, const RolloutEnv& env);

EpisodeInput to_input(const DatasetItem& item);

struct FilterItemReport {
  DatasetItem item;
  std::vector<bool> outcomes;
  double pass_rate = 0;
  bool kept = false;
};

struct FilterReport {
  std::vector<FilterItemReport> items;
  std::vector<DatasetItem> kept() const;
};

/// n episodes per item, pass = Correct, keep iff lo <= rate <= hi. Each item
/// draws from its own seed stream, so the result does not depend on order.
FilterReport difficulty_filter(const std::vector<DatasetItem>& dataset, const RolloutEnv& env, int n, double lo,
                               double hi, std::uint64_t seed);

struct TrainerConfig {
  EpisodeConfig episode;
  RewardConfig reward;
  GrpoConfig grpo;
  QueueConfig queue;
  /// Groups per update; 0 means every eligible question once.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct MetricsRow {
  std::int64_t step = 0;
  std::int64_t policy_version = 0;
  bool skipped = false;
  std::string skip_reason;
  std::size_t fresh_episodes = 0;
  std::size_t fresh_per_question = 0;
  std::size_t groups = 0;
  std::size_t trajectories_consumed = 0;
  std::size_t replacements = 0;
  double mean_group_reward = 0;
  double std_group_reward = 0;
  double mean_fresh_reward = 0;
  double fresh_pass_rate = 0;
  double r_answer_mean = 0;
  double r_parse_mean = 0;
  double r_exec_mean = 0;
  double objective = 0;
  double kl_value = 0;
  /// Queue pass rates in ten equal bins over [0, 1].
  std::vector<std::size_t> pass_rate_histogram;
  double wall_clock_s = 0;
};

/// Rollout, reward, queue and update loop for the toy policy.
class Trainer {
 public:
  Trainer(TrainerConfig cfg, std::vector<DatasetItem> dataset, ToyPolicy initial, std::shared_ptr<const ToyCodec> codec,
          const ToolRegistry& tools, std::string system_prompt, AnswerJudge& judge);

  /// Fills every queue with G fresh trajectories. Idempotent once done.
  void warm_up();
  /// One step: g fresh episodes per question, push, select, one update.
  MetricsRow train_step();

  const ToyPolicy& policy() const { return *policy_; }
  const ToyPolicy& reference() const { return ref_; }
  const std::map<std::string, TrajectoryQueue>& queues() const { return queues_; }
  std::int64_t steps_done() const { return step_; }
  bool warmed_up() const { return warmed_; }
  const TrainerConfig& config() const { return cfg_; }
  const std::vector<DatasetItem>& dataset() const { return dataset_; }
  /// Mean total reward of the warm-up rollouts.
  double warmup_mean_reward() const { return warmup_mean_; }

  /// Serialized training state: policies, queues, counters.
  std::string checkpoint() const;
  /// Restores state written by checkpoint(); configuration and dataset must match.
  void restore(const std::string& checkpoint_json);

 private:
  /// `count` fresh episodes for every question, grouped by question in dataset order.
  std::vector<std::vector<Trajectory>> rollout_all(std::size_t count, std::uint64_t round);
  RolloutEnv env(const SamplingPolicy& agent) const;

  TrainerConfig cfg_;
  std::vector<DatasetItem> dataset_;
  std::shared_ptr<ToyPolicy> policy_;
  ToyPolicy ref_;
  std::shared_ptr<const ToyCodec> codec_;
  const ToolRegistry& tools_;
  std::string system_prompt_;
  AnswerJudge& judge_;
  std::map<std::string, TrajectoryQueue> queues_;
  std::int64_t step_ = 0;
  bool warmed_ = false;
  double warmup_mean_ = 0;
};

}  // namespace toolr1
