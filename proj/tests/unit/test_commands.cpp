// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "toolr1/commands.hpp"
#include "toolr1/live.hpp"
#include "toolr1/synthetic.hpp"

#include <filesystem>
#include <fstream>

using namespace toolr1;
namespace fs = std::filesystem;

namespace {

const std::string kTraces = TOOLR1_SOURCE_DIR "/fixtures/traces";

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("toolr1-cmd-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig traces_config(const fs::path& run_dir) {
  auto cfg = load_config(kTraces + "/config.json");
  cfg.run_dir = run_dir.string();
  return cfg;
}

struct Interrupted : std::runtime_error {
  Interrupted() : std::runtime_error("interrupted") {}
};

Json without_clock(Json row) {
  row.erase("wall_clock_s");
  return row;
}

}  // namespace

TEST_CASE("rollout writes one record per episode") {
  TempDir tmp;
  auto cfg = traces_config(tmp.path / "run");
  auto items = load_dataset(kTraces + "/dataset.jsonl");
  std::vector<DatasetItem> honey;
  for (const auto& i : items)
    if (i.question_id == "honey_mayonnaise") honey.push_back(i);
  auto out = tmp.path / "honey.jsonl";
  CHECK(cmd_rollout(cfg, honey, 1, out) == 1);
  auto rows = read_jsonl(out);
  REQUIRE(rows.size() == 1);
  auto t = trajectory_from_json(rows[0]);
  CHECK(t.final_answer == std::optional<std::string>("6"));
  REQUIRE(t.reward);
  CHECK(t.reward->total == doctest::Approx(1.6).epsilon(1e-12));

  auto twice = tmp.path / "twice.jsonl";
  CHECK(cmd_rollout(cfg, items, 2, twice) == 2 * items.size());
  auto again = tmp.path / "again.jsonl";
  cmd_rollout(cfg, items, 2, again);
  CHECK(read_jsonl(twice) == read_jsonl(again));
}

TEST_CASE("rollout of an empty dataset writes an empty file") {
  TempDir tmp;
  auto out = tmp.path / "empty.jsonl";
  CHECK(cmd_rollout(traces_config(tmp.path / "run"), {}, 1, out) == 0);
  CHECK(fs::exists(out));
  CHECK(fs::file_size(out) == 0);
}

TEST_CASE("an unknown tool in a script becomes an observation") {
  TempDir tmp;
  auto scripts = tmp.path / "scripts.json";
  std::ofstream(scripts) << R"({"default": {"variants": [[
    "Thought: search.\nCode:\n```py\nprint(google(query=\"x\"))\n```<end_code>",
    "Thought: give up.\nCode:\n```py\nfinal_answer(answer=\"none\")\n```<end_code>"]]}})";
  auto cfg = traces_config(tmp.path / "run");
  cfg.scripts_path = scripts.string();
  auto out = tmp.path / "out.jsonl";
  DatasetItem item{"q1", "Anything?", "6", std::nullopt, "test", std::nullopt};
  CHECK(cmd_rollout(cfg, {item}, 1, out) == 1);
  auto t = trajectory_from_json(read_jsonl(out).at(0));
  REQUIRE(t.steps.size() == 2);
  CHECK(t.steps[0].observation.find("Error:") != std::string::npos);
  CHECK(t.steps[0].observation.find("google") != std::string::npos);
  CHECK(t.final_answer == std::optional<std::string>("none"));
}

TEST_CASE("config validation runs before any rollout") {
  TempDir tmp;
  auto cfg = traces_config(tmp.path / "run");
  cfg.episode.max_steps = 0;
  auto out = tmp.path / "never.jsonl";
  CHECK_THROWS(cmd_rollout(cfg, load_dataset(kTraces + "/dataset.jsonl"), 1, out));
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("eval on the trace suite scores every item correct") {
  TempDir tmp;
  auto report = cmd_eval(traces_config(tmp.path / "run"), load_dataset(kTraces + "/dataset.jsonl"));
  CHECK(report.items == 5);
  CHECK(report.correct == 5);
  CHECK(report.ans_acc == 1.0);
  CHECK(report.per_level.at("1").items == 3);
  CHECK(report.per_level.at("2").correct == 2);
  auto j = eval_report_to_json(report);
  CHECK(j["ans_acc"] == 1.0);
}

TEST_CASE("eval and filter on engineered synthetic questions") {
  TempDir tmp;
  auto cfg = cmd_synth(4, 5, tmp.path);
  auto loaded = load_config(tmp.path / "config.json");
  auto items = load_dataset(tmp.path / "dataset.jsonl");
  REQUIRE(items.size() == 4);

  auto scripts = synthetic::engineered_policy(items, {1.0, 0.0, 1.0, 0.0});
  Json js{{"scripts", Json::object()}};
  for (const auto& it : items) {
    const auto* s = scripts.script_for(it.question_id);
    js["scripts"][it.question_id] = {{"variants", s->variants}, {"weights", s->weights}};
  }
  std::ofstream(tmp.path / "scripts.json") << js.dump();
  loaded.policy = PolicyKind::Scripted;
  loaded.scripts_path = (tmp.path / "scripts.json").string();
  loaded.system_prompt_path.clear();
  auto report = cmd_eval(loaded, items);
  CHECK(report.ans_acc == 0.5);

  auto three = std::vector<DatasetItem>(items.begin(), items.begin() + 3);
  auto mixed = synthetic::engineered_policy(three, {1.0, 0.5, 0.0});
  Json jm{{"scripts", Json::object()}};
  for (const auto& it : three) {
    const auto* s = mixed.script_for(it.question_id);
    jm["scripts"][it.question_id] = {{"variants", s->variants}, {"weights", s->weights}};
  }
  std::ofstream(tmp.path / "mixed.json") << jm.dump();
  loaded.scripts_path = (tmp.path / "mixed.json").string();
  auto fr = cmd_filter(loaded, three, tmp.path / "kept.jsonl", tmp.path / "report.jsonl");
  REQUIRE(fr.items.size() == 3);
  for (const auto& r : fr.items) CHECK(r.outcomes.size() == 10);
  CHECK_FALSE(fr.items[0].kept);
  CHECK_FALSE(fr.items[2].kept);
  auto kept = load_dataset(tmp.path / "kept.jsonl");
  CHECK(kept.size() == fr.kept().size());
  CHECK(read_jsonl(tmp.path / "report.jsonl").size() == 3);
  auto fr2 = cmd_filter(loaded, three, tmp.path / "kept2.jsonl", tmp.path / "report2.jsonl");
  CHECK(read_jsonl(tmp.path / "report.jsonl") == read_jsonl(tmp.path / "report2.jsonl"));
  (void)cfg;
}

TEST_CASE("replay renders stored trajectories") {
  TempDir tmp;
  auto out = tmp.path / "t.jsonl";
  cmd_rollout(traces_config(tmp.path / "run"), load_dataset(kTraces + "/dataset.jsonl"), 1, out);
  auto text = cmd_replay(out, "honey_mayonnaise");
  CHECK(text.find("Observation: 6") != std::string::npos);
  CHECK(text.find("Thought:") != std::string::npos);
  CHECK(text.find("```py") != std::string::npos);
  CHECK(cmd_replay(out, "").find("Ground Truth:") != std::string::npos);
  CHECK_THROWS(cmd_replay(out, "nope"));

  auto empty = tmp.path / "empty.jsonl";
  std::ofstream(empty).close();
  CHECK_THROWS(cmd_replay(empty, ""));

  std::ifstream in(out, std::ios::binary);
  std::string first;
  std::getline(in, first);
  auto cut = tmp.path / "cut.jsonl";
  std::ofstream(cut, std::ios::binary) << first << "\n" << first.substr(0, first.size() / 2);
  try {
    cmd_replay(cut, "ipcc_nuclear");
    FAIL("expected RecordError");
  } catch (const RecordError& e) {
    CHECK(e.offset == first.size() + 1);
  }
}

TEST_CASE("train smoke run and resume") {
  TempDir tmp;
  auto base = cmd_synth(6, 3, tmp.path);
  base = load_config(tmp.path / "config.json");
  auto items = load_dataset(tmp.path / "dataset.jsonl");

  SUBCASE("two steps emit two rows") {
    auto cfg = base;
    cfg.steps = 2;
    cfg.run_dir = (tmp.path / "smoke").string();
    auto rows = cmd_train(cfg, items, false);
    CHECK(rows.size() == 2);
    CHECK(read_jsonl(fs::path(cfg.run_dir) / "metrics.jsonl").size() == 2);
    CHECK_THROWS(cmd_train(cfg, items, false));
  }

  SUBCASE("resume after an interruption matches an uninterrupted run") {
    auto cfg = base;
    cfg.steps = 8;
    cfg.checkpoint_every = 3;
    cfg.run_dir = (tmp.path / "straight").string();
    cmd_train(cfg, items, false);
    auto straight = read_jsonl(fs::path(cfg.run_dir) / "metrics.jsonl");
    REQUIRE(straight.size() == 8);

    cfg.run_dir = (tmp.path / "broken").string();
    CHECK_THROWS_AS(cmd_train(cfg, items, false,
                              [](const MetricsRow& r) {
                                if (r.step == 5) throw Interrupted();
                              }),
                    Interrupted);
    CHECK(read_jsonl(fs::path(cfg.run_dir) / "metrics.jsonl").size() == 5);
    auto resumed = cmd_train(cfg, items, true);
    CHECK(resumed.size() == 5);  // steps 4..8 after the step-3 checkpoint
    auto rows = read_jsonl(fs::path(cfg.run_dir) / "metrics.jsonl");
    REQUIRE(rows.size() == straight.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(without_clock(rows[i]) == without_clock(straight[i]));
    auto a = RunDir(tmp.path / "straight").latest_checkpoint();
    auto b = RunDir(cfg.run_dir).latest_checkpoint();
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->second == b->second);
  }
}

TEST_CASE("non-toy policies cannot train") {
  TempDir tmp;
  CHECK_THROWS_AS(cmd_train(traces_config(tmp.path / "run"), load_dataset(kTraces + "/dataset.jsonl"), false),
                  std::invalid_argument);
}

TEST_CASE("remote and live backends are refused offline") {
  TempDir tmp;
  auto cfg = traces_config(tmp.path / "run");
  cfg.policy = PolicyKind::Remote;
  cfg.remote_endpoint = "http://localhost:1/v1";
  cfg.remote_model = "m";
  CHECK_THROWS_AS(build_runtime(cfg), OfflineError);
  cfg = traces_config(tmp.path / "run");
  cfg.tools = ToolBackendKind::Live;
  CHECK_THROWS_AS(build_runtime(cfg), OfflineError);
}
