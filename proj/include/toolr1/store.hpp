// SPDX-License-Identifier: Apache-2.0
// Line-delimited JSON records, run configuration and run directories.
#pragma once

#include "toolr1/episode.hpp"
#include "toolr1/grpo.hpp"
#include "toolr1/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace toolr1 {

using Json = nlohmann::json;

Json value_to_json(const Value& v);
Value value_from_json(const Json& j);

Json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const Json& j);

Json policy_to_json(const ToyPolicy& p);
ToyPolicy policy_from_json(const Json& j);

Json item_to_json(const DatasetItem& item);
DatasetItem item_from_json(const Json& j);

Json metrics_to_json(const MetricsRow& row);
MetricsRow metrics_from_json(const Json& j);

struct RecordError : std::runtime_error {
  RecordError(const std::string& what, std::size_t line, std::size_t offset)
      : std::runtime_error(what), line(line), offset(offset) {}
  std::size_t line;
  std::size_t offset;  // byte offset of the offending line
};

/// Parses every line of a JSONL file. Blank lines are skipped; a malformed or
/// unterminated line raises RecordError with its byte offset.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

/// Appends one compact object per line and flushes after each record.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path, bool append = false);
  void write(const Json& record);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

std::vector<DatasetItem> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<DatasetItem>& items);

/// Scripted turns: {"scripts": {question_id: {"variants": [[turn, ...]], "weights": [w]}},
/// "default": {...}}. Weights may be omitted for equal weighting.
ScriptedPolicy scripted_policy_from_json(const Json& j);
ScriptedPolicy load_scripted_policy(const std::filesystem::path& path);

enum class ExecutorKind { Builtin, Shim };
enum class PolicyKind { Toy, Scripted, Remote };
enum class ToolBackendKind { Fixture, Live };

struct RunConfig {
  EpisodeConfig episode;
  RewardConfig reward;
  GrpoConfig grpo;
  QueueConfig queue;
  std::uint64_t seed = 0;
  int workers = 1;
  std::size_t batch_size = 0;
  int epochs = 1;
  int steps = 0;  // overrides epochs when positive
  int checkpoint_every = 10;
  int filter_samples = 10;

  ExecutorKind executor = ExecutorKind::Builtin;
  std::vector<std::string> shim_command;

  PolicyKind policy = PolicyKind::Toy;
  std::string scripts_path;  // scripted policy: JSON scripts per question
  std::string remote_endpoint;
  std::string remote_model;
  std::string judge_endpoint;
  std::string judge_model;

  ToolBackendKind tools = ToolBackendKind::Fixture;
  std::vector<std::string> fixture_paths;

  std::string system_prompt_path;
  std::string judge_prompt_path;
  std::string run_dir = "runs/default";
  /// Toy task family used by the toy policy ("synthetic").
  std::string toy_task = "synthetic";

  /// Throws std::invalid_argument naming the first bad key.
  void validate() const;
};

Json config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const Json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Directory with config.json, metrics.jsonl, checkpoints/ and shards/.
class RunDir {
 public:
  explicit RunDir(std::filesystem::path root);
  /// Creates the layout and writes the config copy.
  static RunDir create(const std::filesystem::path& root, const RunConfig& cfg);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path config_path() const { return root_ / "config.json"; }
  std::filesystem::path metrics_path() const { return root_ / "metrics.jsonl"; }
  std::filesystem::path checkpoint_dir() const { return root_ / "checkpoints"; }
  std::filesystem::path shard_path(const std::string& name) const { return root_ / "shards" / (name + ".jsonl"); }

  void write_checkpoint(std::int64_t step, const std::string& state) const;
  /// Most recent checkpoint, if any.
  std::optional<std::pair<std::int64_t, std::string>> latest_checkpoint() const;

 private:
  std::filesystem::path root_;
};

}  // namespace toolr1
