// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "toolr1/episode.hpp"
#include "toolr1/store.hpp"
#include "toolr1/synthetic.hpp"
#include "toolr1/trainer.hpp"

#include <regex>

using namespace toolr1;

namespace {

const std::string kTraces = TOOLR1_SOURCE_DIR "/fixtures/traces";

struct Traces {
  std::vector<DatasetItem> items = load_dataset(kTraces + "/dataset.jsonl");
  ScriptedPolicy policy = load_scripted_policy(kTraces + "/scripts.json");
  ToolRegistry tools = ToolRegistry::canonical(
      std::make_shared<FixtureBackend>(FixtureTable::load(kTraces + "/tools.json")));
  std::string prompt = render_system_prompt(default_system_prompt_template(), tools, ExecLimits{}.allowed_imports);

  const DatasetItem& item(const std::string& id) const {
    for (const auto& it : items)
      if (it.question_id == id) return it;
    FAIL("no item " << id);
    return items.front();
  }

  Trajectory run(const std::string& id, const SamplingPolicy* p = nullptr, EpisodeConfig cfg = {}) const {
    return run_episode(to_input(item(id)), {p ? *p : policy, tools, prompt}, cfg, 1);
  }
};

// Independent whitespace-run count: every maximal run of spaces or of non-spaces is one token.
std::size_t count_runs(const std::string& s) {
  static const std::regex run(R"(\s+|\S+)");
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(s.begin(), s.end(), run), std::sregex_iterator()));
}

void check_mask_invariant(const Trajectory& t, const Tokenizer& tok) {
  auto mask = build_mask(t.segments, tok);
  std::size_t ones = 0;
  for (auto m : mask) ones += m;
  CHECK(mask.size() == flatten_tokens(t.segments).size());
  CHECK(ones == t.model_token_count());
  CHECK(ones == t.behavior_logprobs.size());
}

class NeverFinishes final : public SamplingPolicy {
 public:
  struct Session final : PolicySession {
    TurnSample next_turn(const PolicyContext&, double, int) override {
      std::string text = "Thought: keep going.\nCode:\n```py\nx = 1\n```<end_code>";
      auto tokens = WhitespaceTokenizer().encode(text, SegmentSource::Model);
      std::vector<double> lp(tokens.size(), -0.5);
      return {text, std::move(tokens), std::move(lp)};
    }
  };
  std::unique_ptr<PolicySession> start_episode(std::uint64_t) const override { return std::make_unique<Session>(); }
  const Tokenizer& tokenizer() const override { return tok_; }

 private:
  WhitespaceTokenizer tok_;
};

class Flaky final : public SamplingPolicy {
 public:
  struct Session final : PolicySession {
    int n = 0;
    TurnSample next_turn(const PolicyContext&, double, int) override {
      if (n++ == 1) throw PolicyBackendFailure("backend went away");
      return {"Thought: t\nCode:\n```py\nprint(1)\n```<end_code>", {}, {}};
    }
  };
  std::unique_ptr<PolicySession> start_episode(std::uint64_t) const override { return std::make_unique<Session>(); }
  const Tokenizer& tokenizer() const override { return tok_; }

 private:
  WhitespaceTokenizer tok_;
};

}  // namespace

TEST_CASE("honey/mayonnaise trace replays to the ground truth") {
  Traces tr;
  auto t = tr.run("honey_mayonnaise");
  REQUIRE(t.final_answer);
  CHECK(*t.final_answer == "6");
  CHECK(t.steps.size() == 5);
  auto code = code_rewards(t);
  CHECK(code.n_total == 5);
  CHECK(code.n_parsed == 5);
  CHECK(code.n_executed == 5);
  CHECK(t.steps[0].observation == "No Wikipedia page found for 'density of honey and mayonnaise at 25C'");
  CHECK_FALSE(t.failed);
  check_mask_invariant(t, tr.policy.tokenizer());

  // Ones in the mask equal an independent recount of the turn tokens.
  std::size_t expected = 0;
  for (const auto& s : t.steps) expected += count_runs(s.turn);
  auto mask = build_mask(t.segments, tr.policy.tokenizer());
  CHECK(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)) == expected);

  // Replays are byte-identical.
  auto again = tr.run("honey_mayonnaise");
  CHECK(serialize_context(again) == serialize_context(t));
  CHECK(again.segments == t.segments);
}

TEST_CASE("every trace replays deterministically and reaches its ground truth") {
  Traces tr;
  for (const auto& item : tr.items) {
    CAPTURE(item.question_id);
    auto a = tr.run(item.question_id);
    auto b = tr.run(item.question_id);
    REQUIRE(a.final_answer);
    CHECK(rule_judge(item.ground_truth, *a.final_answer) == Judgment::Correct);
    CHECK(serialize_context(a) == serialize_context(b));
    check_mask_invariant(a, tr.policy.tokenizer());
  }
}

TEST_CASE("two-step prefix carries the report URL observation verbatim") {
  Traces tr;
  auto t = tr.run("ipcc_nuclear");
  REQUIRE(t.steps.size() >= 2);
  std::vector<Step> prefix(t.steps.begin(), t.steps.begin() + 2);
  auto ctx = serialize_context(tr.prompt, to_input(tr.item("ipcc_nuclear")).question, prefix);
  CHECK(ctx.find("Search summary: the 85-page AR6 Synthesis Report is at "
                 "https://www.ipcc.ch/report/ar6/syr/downloads/report/IPCC_AR6_SYR_LongerReport.pdf") !=
        std::string::npos);
}

TEST_CASE("an unparseable turn is survivable") {
  Traces tr;
  const auto* script = tr.policy.script_for("kipchoge_moon");
  REQUIRE(script);
  std::vector<std::string> turns{"I think I should compute the distance first."};
  turns.insert(turns.end(), script->variants[0].begin(), script->variants[0].end());
  ScriptedPolicy p(turns);
  auto t = tr.run("kipchoge_moon", &p);
  REQUIRE(t.final_answer);
  CHECK(*t.final_answer == "17");
  CHECK(t.steps[0].observation == kParseFailureObservation);
  CHECK_FALSE(t.steps[0].exec);
  auto code = code_rewards(t);
  CHECK(code.n_total == script->variants[0].size() + 1);
  CHECK(code.n_parsed == script->variants[0].size());
}

TEST_CASE("episodes stop at max_steps") {
  Traces tr;
  NeverFinishes p;
  auto t = tr.run("honey_mayonnaise", &p);
  CHECK(t.steps.size() == 10);
  CHECK_FALSE(t.final_answer);
  CHECK(t.predicted().empty());
  check_mask_invariant(t, p.tokenizer());
  EpisodeConfig short_cfg;
  short_cfg.max_steps = 3;
  CHECK(tr.run("honey_mayonnaise", &p, short_cfg).steps.size() == 3);
}

TEST_CASE("a policy backend failure marks the trajectory failed") {
  Traces tr;
  Flaky p;
  auto t = tr.run("honey_mayonnaise", &p);
  CHECK(t.failed);
  CHECK(t.failure.find("backend went away") != std::string::npos);
  CHECK(t.steps.size() == 1);
}

TEST_CASE("serialize_context") {
  std::vector<Step> none;
  CHECK(serialize_context("SYS", "Q", none) == render_task_segment("SYS", "Q"));
  CHECK(render_task_segment("SYS", "Q") == "SYS\n\nTask: Q\n\n");

  Step s;
  s.turn = "Thought: a\nCode:\n```py\nprint(1)\n```<end_code>";
  s.observation = "1\n";
  auto one = serialize_context("SYS", "Q", {s});
  CHECK(one == "SYS\n\nTask: Q\n\n" + s.turn + render_observation_segment(s.observation));
  std::size_t blocks = 0;
  for (auto p = one.find("Observation:"); p != std::string::npos; p = one.find("Observation:", p + 1)) ++blocks;
  CHECK(blocks == 1);
  CHECK(serialize_context("SYS", "Q", {s, s}).size() > one.size());
}

TEST_CASE("observation rendering") {
  Step s;
  s.parsed = ParsedStep{};
  s.exec = ExecOutcome{"hello\n", ExecError{ExecErrorKind::NameError, "name 'x' is not defined"}, {}, {}};
  CHECK(render_observation(s, 4096) == "hello\nError: NameError: name 'x' is not defined");
  s.exec = ExecOutcome{std::string(5000, 'a'), {}, {}, {}};
  CHECK(render_observation(s, 4096).size() <= 4096 + 64);
  Step failed;
  CHECK(render_observation(failed, 4096) == kParseFailureObservation);
}

TEST_CASE("build_mask cases") {
  WhitespaceTokenizer tok;
  auto seg = [&](std::string text, SegmentSource src) {
    Segment s{std::move(text), src, {}};
    s.tokens = tok.encode(s.text, src);
    return s;
  };
  std::vector<Segment> env{seg("system prompt here", SegmentSource::Env), seg("\nObservation:\nx\n", SegmentSource::Env)};
  auto m0 = build_mask(env, tok);
  CHECK(std::all_of(m0.begin(), m0.end(), [](auto v) { return v == 0; }));

  std::vector<Segment> mixed{seg("task", SegmentSource::Env), seg("a b c", SegmentSource::Model)};
  auto m1 = build_mask(mixed, tok);
  CHECK(std::count(m1.begin(), m1.end(), 1) == 5);
  CHECK(m1.size() == 6);

  mixed[1].tokens.pop_back();
  CHECK_THROWS_AS(build_mask(mixed, tok), BoundaryMismatch);
}

TEST_CASE("mask invariant holds for sampled toy episodes") {
  auto task = synthetic::make_task(8, 3);
  auto tools = ToolRegistry::canonical(std::make_shared<FixtureBackend>(task.fixtures));
  auto codec = synthetic::make_codec();
  auto policy = std::make_shared<ToyPolicy>(synthetic::initial_policy(synthetic::kPathBias, synthetic::kMalformedBias));
  ToyAgentPolicy agent(policy, codec);
  auto prompt = synthetic::system_prompt();
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto& item = task.items[seed % task.items.size()];
    auto t = run_episode(to_input(item), {agent, tools, prompt}, synthetic::episode_config(0.6), seed);
    CHECK(t.steps.size() <= 4);
    check_mask_invariant(t, *codec);
    auto again = run_episode(to_input(item), {agent, tools, prompt}, synthetic::episode_config(0.6), seed);
    CHECK(again.behavior_logprobs == t.behavior_logprobs);
  }
}
