// SPDX-License-Identifier: Apache-2.0
// Command implementations shared by the CLI and the Python module.
#pragma once

#include "toolr1/episode.hpp"
#include "toolr1/reward.hpp"
#include "toolr1/shim.hpp"
#include "toolr1/store.hpp"
#include "toolr1/toy_agent.hpp"
#include "toolr1/trainer.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace toolr1 {

/// Backends assembled from a RunConfig.
struct Runtime {
  RunConfig config;
  ToolRegistry tools;
  std::shared_ptr<FixtureBackend> fixtures;  // null for live tools
  std::string system_prompt;
  std::unique_ptr<AnswerJudge> judge;
  std::unique_ptr<SamplingPolicy> policy;
  std::shared_ptr<ShimPool> shim;
  std::unique_ptr<ExecutorFactory> executors;
  /// Toy policy only.
  std::shared_ptr<const ToyCodec> codec;
  std::shared_ptr<const ToyPolicy> toy_policy;

  RolloutEnv env() const;
};

/// Validates the config, then builds every backend. A toy policy starts from
/// the latest checkpoint under run_dir when one exists.
std::unique_ptr<Runtime> build_runtime(const RunConfig& cfg);

/// Toy codec and initial policy for cfg.toy_task.
std::shared_ptr<const ToyCodec> toy_codec(const std::string& toy_task);
ToyPolicy toy_initial_policy(const std::string& toy_task);

/// n episodes per item, written to `out` one record per line.
std::size_t cmd_rollout(const RunConfig& cfg, const std::vector<DatasetItem>& dataset, int n,
                        const std::filesystem::path& out);

/// Writes the kept items to `out` and a per-item report line to `report`.
FilterReport cmd_filter(const RunConfig& cfg, const std::vector<DatasetItem>& dataset,
                        const std::filesystem::path& out, const std::filesystem::path& report);

struct LevelScore {
  std::size_t items = 0;
  std::size_t correct = 0;
};

struct EvalReport {
  std::size_t items = 0;
  std::size_t correct = 0;
  double ans_acc = 0;
  std::map<std::string, LevelScore> per_level;
  std::vector<Trajectory> trajectories;
};

/// One episode per item; AnsAcc is the fraction judged Correct.
EvalReport cmd_eval(const RunConfig& cfg, const std::vector<DatasetItem>& dataset);
Json eval_report_to_json(const EvalReport& report);

/// Warm-up then train steps until cfg.steps (or epochs) are done, with
/// metrics appended to run_dir/metrics.jsonl and periodic checkpoints.
/// With `resume`, continues from the latest checkpoint in run_dir.
std::vector<MetricsRow> cmd_train(const RunConfig& cfg, const std::vector<DatasetItem>& dataset, bool resume,
                                  const std::function<void(const MetricsRow&)>& on_step = {});

/// Number of train steps the config asks for.
std::int64_t planned_steps(const RunConfig& cfg, std::size_t dataset_size);

/// Writes a synthetic toy task to `dir`: dataset.jsonl, tools.json and a
/// config.json for a 100-step toy training run. Returns that config.
RunConfig cmd_synth(std::size_t n, std::uint64_t seed, const std::filesystem::path& dir);

/// Thought/Code/Observation transcript of a stored trajectory.
std::string render_transcript(const Trajectory& t);

/// Loads a trajectory file and renders the record whose question_id is `id`
/// (the first record when `id` is empty). Throws on an empty file, a bad
/// record or an unknown id.
std::string cmd_replay(const std::filesystem::path& file, const std::string& id);

}  // namespace toolr1
