// SPDX-License-Identifier: Apache-2.0
#include "toolr1/commands.hpp"

#include "toolr1/live.hpp"
#include "toolr1/remote_policy.hpp"
#include "toolr1/synthetic.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace toolr1 {

namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::string> env_var(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

}  // namespace

RolloutEnv Runtime::env() const {
  return RolloutEnv{*policy,         tools,           system_prompt,     *judge,
                    config.episode, config.reward,   executors.get(), config.workers};
}

std::shared_ptr<const ToyCodec> toy_codec(const std::string& toy_task) {
  if (toy_task == "synthetic") return synthetic::make_codec();
  throw std::invalid_argument("unknown toy_task '" + toy_task + "'");
}

ToyPolicy toy_initial_policy(const std::string& toy_task) {
  if (toy_task == "synthetic") return synthetic::initial_policy(synthetic::kPathBias, synthetic::kMalformedBias);
  throw std::invalid_argument("unknown toy_task '" + toy_task + "'");
}

std::unique_ptr<Runtime> build_runtime(const RunConfig& cfg) {
  cfg.validate();
  auto rt = std::make_unique<Runtime>();
  rt->config = cfg;

  std::shared_ptr<ToolBackend> backend;
  if (cfg.tools == ToolBackendKind::Fixture) {
    FixtureTable table;
    for (const auto& p : cfg.fixture_paths) table.merge(FixtureTable::load(p));
    rt->fixtures = std::make_shared<FixtureBackend>(std::move(table));
    backend = rt->fixtures;
  } else {
    backend = std::make_shared<LiveToolBackend>(LiveToolConfig::from_env());
  }
  rt->tools = ToolRegistry::canonical(backend);

  const std::string tmpl =
      cfg.system_prompt_path.empty() ? default_system_prompt_template() : read_text(cfg.system_prompt_path);
  rt->system_prompt = render_system_prompt(tmpl, rt->tools, cfg.episode.limits.allowed_imports);

  if (cfg.reward.judge == JudgeKind::Rule) {
    rt->judge = std::make_unique<RuleJudge>();
  } else {
    ChatConfig cc{cfg.judge_endpoint, cfg.judge_model, env_var("TOOLR1_JUDGE_API_KEY"), {}};
    const std::string prompt =
        cfg.judge_prompt_path.empty() ? default_judge_prompt() : read_text(cfg.judge_prompt_path);
    rt->judge = std::make_unique<LlmJudge>(std::make_shared<ChatClient>(cc), prompt);
  }

  switch (cfg.policy) {
    case PolicyKind::Toy: {
      rt->codec = toy_codec(cfg.toy_task);
      ToyPolicy p = toy_initial_policy(cfg.toy_task);
      if (auto ck = RunDir(cfg.run_dir).latest_checkpoint())
        p = policy_from_json(Json::parse(ck->second).at("policy"));
      rt->toy_policy = std::make_shared<const ToyPolicy>(std::move(p));
      rt->policy = std::make_unique<ToyAgentPolicy>(rt->toy_policy, rt->codec);
      break;
    }
    case PolicyKind::Scripted:
      rt->policy = std::make_unique<ScriptedPolicy>(load_scripted_policy(cfg.scripts_path));
      break;
    case PolicyKind::Remote: {
      ChatConfig cc{cfg.remote_endpoint, cfg.remote_model, env_var("TOOLR1_POLICY_API_KEY"), {}};
      rt->policy = std::make_unique<RemotePolicy>(std::make_shared<ChatClient>(cc), cfg.remote_model);
      break;
    }
  }

  if (cfg.executor == ExecutorKind::Shim) {
    rt->shim = std::make_shared<ShimPool>(ShimOptions{cfg.shim_command}, static_cast<std::size_t>(cfg.workers));
    rt->executors = std::make_unique<ShimExecutorFactory>(rt->shim);
  } else {
    rt->executors = std::make_unique<BuiltinExecutorFactory>();
  }
  return rt;
}

std::size_t cmd_rollout(const RunConfig& cfg, const std::vector<DatasetItem>& dataset, int n, const fs::path& out) {
  if (n < 1) throw std::invalid_argument("rollout: n must be >= 1");
  auto rt = build_runtime(cfg);
  std::vector<EpisodeJob> jobs;
  for (const auto& item : dataset)
    for (int j = 0; j < n; ++j)
      jobs.push_back({to_input(item), derive_seed(cfg.seed, "rollout-cmd", {fnv1a(item.question_id), std::uint64_t(j)})});
  auto results = run_rollouts(jobs, rt->env());
  JsonlWriter writer(out);
  for (const auto& t : results) writer.write(trajectory_to_json(t));
  return results.size();
}

FilterReport cmd_filter(const RunConfig& cfg, const std::vector<DatasetItem>& dataset, const fs::path& out,
                        const fs::path& report_path) {
  auto rt = build_runtime(cfg);
  FilterReport report = difficulty_filter(dataset, rt->env(), cfg.filter_samples, cfg.queue.pass_lo,
                                          cfg.queue.pass_hi, cfg.seed);
  save_dataset(out, report.kept());
  if (!report_path.empty()) {
    JsonlWriter w(report_path);
    for (const auto& r : report.items)
      w.write({{"question_id", r.item.question_id}, {"pass_rate", r.pass_rate}, {"outcomes", r.outcomes},
               {"kept", r.kept}});
  }
  return report;
}

EvalReport cmd_eval(const RunConfig& cfg, const std::vector<DatasetItem>& dataset) {
  auto rt = build_runtime(cfg);
  std::vector<EpisodeJob> jobs;
  for (const auto& item : dataset)
    jobs.push_back({to_input(item), derive_seed(cfg.seed, "eval", {fnv1a(item.question_id)})});
  EvalReport report;
  report.trajectories = run_rollouts(jobs, rt->env());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const bool ok = is_pass(report.trajectories[i]);
    ++report.items;
    report.correct += ok;
    if (dataset[i].level) {
      auto& l = report.per_level[*dataset[i].level];
      ++l.items;
      l.correct += ok;
    }
  }
  report.ans_acc = report.items ? static_cast<double>(report.correct) / static_cast<double>(report.items) : 0.0;
  return report;
}

Json eval_report_to_json(const EvalReport& r) {
  Json levels = Json::object();
  for (const auto& [level, s] : r.per_level)
    levels[level] = {{"items", s.items},
                     {"correct", s.correct},
                     {"ans_acc", s.items ? static_cast<double>(s.correct) / static_cast<double>(s.items) : 0.0}};
  return {{"items", r.items}, {"correct", r.correct}, {"ans_acc", r.ans_acc}, {"per_level", levels}};
}

std::int64_t planned_steps(const RunConfig& cfg, std::size_t dataset_size) {
  if (cfg.steps > 0) return cfg.steps;
  const std::size_t per_step = cfg.batch_size == 0 ? dataset_size : cfg.batch_size;
  const std::size_t per_epoch = (dataset_size + per_step - 1) / per_step;
  return static_cast<std::int64_t>(per_epoch) * cfg.epochs;
}

std::vector<MetricsRow> cmd_train(const RunConfig& cfg, const std::vector<DatasetItem>& dataset, bool resume,
                                  const std::function<void(const MetricsRow&)>& on_step) {
  if (cfg.policy != PolicyKind::Toy) throw std::invalid_argument("train: only the toy policy can be updated");
  auto rt = build_runtime(cfg);
  auto checkpoint = RunDir(cfg.run_dir).latest_checkpoint();
  if (checkpoint && !resume)
    throw std::invalid_argument("train: " + cfg.run_dir + " already has checkpoints; pass --resume or use a new run_dir");
  RunDir dir = resume && checkpoint ? RunDir(cfg.run_dir) : RunDir::create(cfg.run_dir, cfg);

  TrainerConfig tc{cfg.episode, cfg.reward, cfg.grpo, cfg.queue, cfg.batch_size, cfg.seed, cfg.workers};
  Trainer trainer(tc, dataset, toy_initial_policy(cfg.toy_task), rt->codec, rt->tools, rt->system_prompt, *rt->judge);
  if (resume && checkpoint) trainer.restore(checkpoint->second);

  // Rows past the checkpoint were produced by a run that did not finish; drop them.
  std::vector<Json> kept;
  if (resume && fs::exists(dir.metrics_path()))
    for (auto& row : read_jsonl(dir.metrics_path()))
      if (row.at("step").get<std::int64_t>() <= trainer.steps_done()) kept.push_back(std::move(row));
  {
    JsonlWriter rewrite(dir.metrics_path());
    for (const auto& row : kept) rewrite.write(row);
  }
  JsonlWriter metrics(dir.metrics_path(), true);

  std::vector<MetricsRow> rows;
  const std::int64_t total = planned_steps(cfg, dataset.size());
  trainer.warm_up();
  while (trainer.steps_done() < total) {
    MetricsRow row = trainer.train_step();
    metrics.write(metrics_to_json(row));
    if (row.step % cfg.checkpoint_every == 0 || row.step == total) dir.write_checkpoint(row.step, trainer.checkpoint());
    if (on_step) on_step(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_transcript(const Trajectory& t) {
  std::string out = fmt::format("Task: {}\nGround Truth: {}\n", t.question, t.ground_truth);
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const Step& s = t.steps[i];
    out += fmt::format("\nStep {}\n", i + 1);
    if (const auto* p = std::get_if<ParsedStep>(&s.parsed)) {
      out += fmt::format("Thought: {}\n\nCode:\n```py\n{}\n```\n", p->thought, p->code);
    } else {
      out += fmt::format("{}\n", s.turn);
    }
    out += s.observation.find('\n') == std::string::npos ? fmt::format("\nObservation: {}\n", s.observation)
                                                         : fmt::format("\nObservation:\n{}\n", s.observation);
  }
  out += fmt::format("\nFinal answer: {}\n", t.final_answer.value_or("(none)"));
  if (t.reward)
    out += fmt::format("Judgment: {}  reward {:.4g} (answer {:.4g}, parse {:.4g}, exec {:.4g})\n",
                       to_string(t.reward->judgment), t.reward->total, t.reward->r_answer, t.reward->r_parse,
                       t.reward->r_exec);
  if (t.failed) out += fmt::format("Policy failure: {}\n", t.failure);
  return out;
}

std::string cmd_replay(const fs::path& file, const std::string& id) {
  auto records = read_jsonl(file);
  if (records.empty()) throw std::invalid_argument(file.string() + ": no trajectory records");
  for (const auto& r : records) {
    if (!id.empty() && r.value("question_id", "") != id) continue;
    return render_transcript(trajectory_from_json(r));
  }
  throw std::invalid_argument(fmt::format("{}: no trajectory with question_id '{}'", file.string(), id));
}

RunConfig cmd_synth(std::size_t n, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  auto task = synthetic::make_task(n, seed);
  save_dataset(dir / "dataset.jsonl", task.items);
  Json entries = Json::array();
  for (const auto& e : task.fixtures.entries)
    entries.push_back({{"tool", e.tool}, {"question_id", *e.question_id}, {"response", e.response}});
  std::ofstream(dir / "tools.json") << Json{{"entries", entries}}.dump(1) << '\n';
  RunConfig cfg;
  cfg.episode = synthetic::episode_config();
  cfg.grpo.learning_rate = 0.5;
  cfg.grpo.temperature = cfg.episode.temperature;
  cfg.fixture_paths = {"tools.json"};
  cfg.run_dir = "run";
  cfg.steps = 100;
  std::ofstream(dir / "config.json") << config_to_json(cfg).dump(2) << '\n';
  return cfg;
}

}  // namespace toolr1
