// SPDX-License-Identifier: Apache-2.0
// toolr1 command-line interface: rollout, filter, train, eval, replay, synth.
#include "toolr1/commands.hpp"
#include "toolr1/live.hpp"
#include "toolr1/synthetic.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

using namespace toolr1;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string run_dir;
  std::string dataset;
};

void add_common(CLI::App* cmd, Common& c, bool needs_dataset = true) {
  cmd->add_option("--config", c.config_path, "Run configuration (JSON)");
  cmd->add_option("--set", c.sets, "Override a config key: dotted.key=value (value parsed as JSON when possible)");
  cmd->add_option("--seed", c.seed, "Override the seed");
  cmd->add_option("--workers", c.workers, "Override the number of rollout workers");
  cmd->add_option("--run-dir", c.run_dir, "Override the run directory");
  if (needs_dataset) cmd->add_option("--dataset", c.dataset, "Dataset file (one JSON object per line)")->required();
}

void set_path(Json& j, const std::string& dotted, const Json& value) {
  Json* node = &j;
  std::size_t start = 0;
  for (;;) {
    auto dot = dotted.find('.', start);
    std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  Json j = config_to_json(cfg);
  for (const auto& s : c.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    const std::string text = s.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    set_path(j, s.substr(0, eq), value);
  }
  if (c.seed) j["seed"] = *c.seed;
  if (c.workers) j["workers"] = *c.workers;
  if (!c.run_dir.empty()) j["run_dir"] = c.run_dir;
  return config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tool-use agent rollouts, difficulty filtering, GRPO training and evaluation"};
  app.require_subcommand(1);

  Common rollout_c, filter_c, train_c, eval_c;
  int rollout_n = 1;
  std::string rollout_out;
  auto* rollout = app.add_subcommand("rollout", "Run n episodes per item and store the trajectories");
  add_common(rollout, rollout_c);
  rollout->add_option("-n,--n", rollout_n, "Episodes per item")->check(CLI::PositiveNumber);
  rollout->add_option("--out", rollout_out, "Trajectory output file")->required();

  std::string filter_out, filter_report;
  std::optional<int> filter_n;
  auto* filter = app.add_subcommand("filter", "Keep items whose pass rate lies in [pass_lo, pass_hi]");
  add_common(filter, filter_c);
  filter->add_option("--out", filter_out, "Filtered dataset output")->required();
  filter->add_option("--report", filter_report, "Per-item report output");
  filter->add_option("-n,--n", filter_n, "Samples per item (default: filter_samples)");

  bool resume = false;
  std::optional<int> train_steps;
  auto* train = app.add_subcommand("train", "Warm up the queues and run GRPO steps");
  add_common(train, train_c);
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in the run directory");
  train->add_option("--steps", train_steps, "Total train steps (overrides epochs)");

  std::string eval_out, eval_report;
  auto* eval = app.add_subcommand("eval", "One episode per item; report answer accuracy");
  add_common(eval, eval_c);
  eval->add_option("--out", eval_out, "Trajectory output file");
  eval->add_option("--report", eval_report, "JSON report output");

  std::string replay_file, replay_id;
  auto* replay = app.add_subcommand("replay", "Print a stored trajectory as a transcript");
  replay->add_option("file", replay_file, "Trajectory file")->required();
  replay->add_option("--id", replay_id, "question_id to show (default: first record)");

  std::size_t synth_n = 64;
  std::uint64_t synth_seed = 0;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a synthetic lookup-and-arithmetic task for toy training");
  synth->add_option("-n,--n", synth_n, "Number of questions")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Task seed");
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rollout) {
      RunConfig cfg = resolve_config(rollout_c);
      auto n = cmd_rollout(cfg, load_dataset(rollout_c.dataset), rollout_n, rollout_out);
      fmt::print("wrote {} trajectories to {}\n", n, rollout_out);
    } else if (*filter) {
      if (filter_n) filter_c.sets.push_back(fmt::format("filter_samples={}", *filter_n));
      RunConfig cfg = resolve_config(filter_c);
      auto report = cmd_filter(cfg, load_dataset(filter_c.dataset), filter_out, filter_report);
      for (const auto& r : report.items)
        fmt::print("{}\tpass_rate={:.2f}\t{}\n", r.item.question_id, r.pass_rate, r.kept ? "kept" : "dropped");
      fmt::print("kept {} of {}\n", report.kept().size(), report.items.size());
    } else if (*train) {
      if (train_steps) train_c.sets.push_back(fmt::format("steps={}", *train_steps));
      RunConfig cfg = resolve_config(train_c);
      cmd_train(cfg, load_dataset(train_c.dataset), resume, [](const MetricsRow& r) {
        fmt::print("step {:>5}  fresh {:.4f}  pass {:.3f}  group {:.4f}  groups {:>4}  {}\n", r.step,
                   r.mean_fresh_reward, r.fresh_pass_rate, r.mean_group_reward, r.groups,
                   r.skipped ? "skipped: " + r.skip_reason : "");
      });
    } else if (*eval) {
      RunConfig cfg = resolve_config(eval_c);
      auto report = cmd_eval(cfg, load_dataset(eval_c.dataset));
      fmt::print("AnsAcc {:.4f} ({}/{})\n", report.ans_acc, report.correct, report.items);
      for (const auto& [level, s] : report.per_level)
        fmt::print("  level {}: {:.4f} ({}/{})\n", level, s.items ? double(s.correct) / s.items : 0.0, s.correct, s.items);
      if (!eval_out.empty()) {
        JsonlWriter w(eval_out);
        for (const auto& t : report.trajectories) w.write(trajectory_to_json(t));
      }
      if (!eval_report.empty()) std::ofstream(eval_report) << eval_report_to_json(report).dump(2) << '\n';
    } else if (*replay) {
      std::cout << cmd_replay(replay_file, replay_id);
    } else if (*synth) {
      cmd_synth(synth_n, synth_seed, synth_dir);
      fmt::print("wrote {} questions to {}\n", synth_n, synth_dir);
    }
  } catch (const OfflineError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
