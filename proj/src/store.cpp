// SPDX-License-Identifier: Apache-2.0
#include "toolr1/store.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace toolr1 {

namespace fs = std::filesystem;

namespace {

Json json_double(double d) {
  if (std::isfinite(d)) return d;
  if (std::isnan(d)) return "nan";
  return d > 0 ? "inf" : "-inf";
}

double double_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  auto s = j.get<std::string>();
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  throw std::invalid_argument("expected a number, got '" + s + "'");
}

Json doubles_to_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double d : v) a.push_back(json_double(d));
  return a;
}

std::vector<double> doubles_from_json(const Json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(double_from_json(e));
  return out;
}

template <typename T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

std::optional<std::string> opt_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

ParseFailureKind failure_kind_from(std::string_view s) {
  for (auto k : {ParseFailureKind::MissingThought, ParseFailureKind::MissingCode, ParseFailureKind::UnterminatedFence,
                 ParseFailureKind::MissingEndMarker})
    if (s == to_string(k)) return k;
  throw std::invalid_argument(fmt::format("unknown parse failure kind '{}'", s));
}

ExecErrorKind exec_kind_from(std::string_view s) {
  for (auto k : {ExecErrorKind::NameError, ExecErrorKind::TypeError, ExecErrorKind::ArityError,
                 ExecErrorKind::ImportError, ExecErrorKind::ToolError, ExecErrorKind::LimitExceeded})
    if (s == to_string(k)) return k;
  throw std::invalid_argument(fmt::format("unknown error kind '{}'", s));
}

Json reward_to_json(const RewardBreakdown& r) {
  return {{"judgment", to_string(r.judgment)}, {"r_answer", r.r_answer},   {"r_parse", r.r_parse},
          {"r_exec", r.r_exec},                {"n_total", r.n_total},     {"n_parsed", r.n_parsed},
          {"n_executed", r.n_executed},        {"total", r.total}};
}

RewardBreakdown reward_from_json(const Json& j) {
  RewardBreakdown r;
  r.judgment = judgment_from_string(j.at("judgment").get<std::string>());
  r.r_answer = j.at("r_answer").get<double>();
  r.r_parse = j.at("r_parse").get<double>();
  r.r_exec = j.at("r_exec").get<double>();
  r.n_total = j.at("n_total").get<std::size_t>();
  r.n_parsed = j.at("n_parsed").get<std::size_t>();
  r.n_executed = j.at("n_executed").get<std::size_t>();
  r.total = j.at("total").get<double>();
  return r;
}

Json kwargs_to_json(const Kwargs& kwargs) {
  Json a = Json::array();
  for (const auto& [k, v] : kwargs) a.push_back(Json::array({k, value_to_json(v)}));
  return a;
}

Kwargs kwargs_from_json(const Json& j) {
  Kwargs out;
  for (const auto& e : j) out.emplace_back(e.at(0).get<std::string>(), value_from_json(e.at(1)));
  return out;
}

Json step_to_json(const Step& s) {
  Json j;
  j["turn"] = s.turn;
  if (const auto* p = std::get_if<ParsedStep>(&s.parsed)) {
    j["parsed"] = {{"ok", true}, {"thought", p->thought}, {"code", p->code}, {"trailing_text", p->trailing_text}};
  } else {
    const auto& f = std::get<ParseFailure>(s.parsed);
    j["parsed"] = {{"ok", false}, {"kind", to_string(f.kind)}, {"begin", f.begin}, {"end", f.end}};
  }
  j["syntax_error"] = s.syntax_error ? Json{{"message", s.syntax_error->message},
                                            {"line", s.syntax_error->line},
                                            {"column", s.syntax_error->column}}
                                     : Json(nullptr);
  if (s.exec) {
    Json e;
    e["stdout"] = s.exec->stdout_text;
    e["error"] = s.exec->error ? Json{{"kind", to_string(s.exec->error->kind)}, {"message", s.exec->error->message}}
                               : Json(nullptr);
    Json calls = Json::array();
    for (const auto& c : s.exec->tool_calls) calls.push_back({{"tool", c.tool}, {"kwargs", kwargs_to_json(c.kwargs)}});
    e["tool_calls"] = calls;
    e["final_answer"] = s.exec->final_answer ? value_to_json(*s.exec->final_answer) : Json(nullptr);
    e["has_final_answer"] = s.exec->final_answer.has_value();
    j["exec"] = e;
  } else {
    j["exec"] = nullptr;
  }
  j["observation"] = s.observation;
  return j;
}

Step step_from_json(const Json& j) {
  Step s;
  s.turn = j.at("turn").get<std::string>();
  const auto& p = j.at("parsed");
  if (p.at("ok").get<bool>()) {
    s.parsed = ParsedStep{p.at("thought").get<std::string>(), p.at("code").get<std::string>(),
                          p.at("trailing_text").get<std::string>()};
  } else {
    s.parsed = ParseFailure{failure_kind_from(p.at("kind").get<std::string>()), p.at("begin").get<std::size_t>(),
                            p.at("end").get<std::size_t>()};
  }
  if (const auto& se = j.at("syntax_error"); !se.is_null())
    s.syntax_error = SyntaxError{se.at("message").get<std::string>(), se.at("line").get<int>(), se.at("column").get<int>()};
  if (const auto& e = j.at("exec"); !e.is_null()) {
    ExecOutcome o;
    o.stdout_text = e.at("stdout").get<std::string>();
    if (const auto& err = e.at("error"); !err.is_null())
      o.error = ExecError{exec_kind_from(err.at("kind").get<std::string>()), err.at("message").get<std::string>()};
    for (const auto& c : e.at("tool_calls"))
      o.tool_calls.push_back({c.at("tool").get<std::string>(), kwargs_from_json(c.at("kwargs"))});
    if (e.value("has_final_answer", false)) o.final_answer = value_from_json(e.at("final_answer"));
    s.exec = std::move(o);
  }
  s.observation = j.at("observation").get<std::string>();
  return s;
}

}  // namespace

Json value_to_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> Json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NoneType>) return nullptr;
        else if constexpr (std::is_same_v<T, bool>) return x;
        else if constexpr (std::is_same_v<T, std::int64_t>) return x;
        else if constexpr (std::is_same_v<T, double>) {
          if (std::isfinite(x)) return x;
          return Json{{"$float", json_double(x)}};
        } else if constexpr (std::is_same_v<T, std::string>) return x;
        else {
          Json a = Json::array();
          for (const auto& e : x) a.push_back(value_to_json(e));
          return a;
        }
      },
      v.data);
}

Value value_from_json(const Json& j) {
  switch (j.type()) {
    case Json::value_t::null: return NoneType{};
    case Json::value_t::boolean: return j.get<bool>();
    case Json::value_t::number_integer: return j.get<std::int64_t>();
    case Json::value_t::number_unsigned: {
      auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX)) throw std::out_of_range("integer exceeds 64-bit signed range");
      return static_cast<std::int64_t>(u);
    }
    case Json::value_t::number_float: return j.get<double>();
    case Json::value_t::string: return j.get<std::string>();
    case Json::value_t::array: {
      List l;
      for (const auto& e : j) l.push_back(value_from_json(e));
      return l;
    }
    case Json::value_t::object:
      if (j.size() == 1 && j.contains("$float")) return double_from_json(j.at("$float"));
      [[fallthrough]];
    default: throw std::invalid_argument("cannot convert JSON " + j.dump() + " to a value");
  }
}

Json trajectory_to_json(const Trajectory& t) {
  Json j;
  j["question_id"] = t.question_id;
  j["question"] = t.question;
  j["ground_truth"] = t.ground_truth;
  j["final_answer"] = opt(t.final_answer);
  j["policy_version"] = t.policy_version;
  j["failed"] = t.failed;
  j["failure"] = t.failure;
  j["reward"] = t.reward ? reward_to_json(*t.reward) : Json(nullptr);
  Json segs = Json::array();
  for (const auto& s : t.segments)
    segs.push_back({{"source", s.source == SegmentSource::Model ? "model" : "env"}, {"text", s.text}, {"tokens", s.tokens}});
  j["segments"] = segs;
  Json steps = Json::array();
  for (const auto& s : t.steps) steps.push_back(step_to_json(s));
  j["steps"] = steps;
  j["behavior_logprobs"] = doubles_to_json(t.behavior_logprobs);
  return j;
}

Trajectory trajectory_from_json(const Json& j) {
  Trajectory t;
  t.question_id = j.at("question_id").get<std::string>();
  t.question = j.at("question").get<std::string>();
  t.ground_truth = j.at("ground_truth").get<std::string>();
  t.final_answer = opt_string(j, "final_answer");
  t.policy_version = j.at("policy_version").get<std::int64_t>();
  t.failed = j.at("failed").get<bool>();
  t.failure = j.at("failure").get<std::string>();
  if (const auto& r = j.at("reward"); !r.is_null()) t.reward = reward_from_json(r);
  for (const auto& s : j.at("segments")) {
    auto src = s.at("source").get<std::string>();
    if (src != "model" && src != "env") throw std::invalid_argument("segment source must be 'model' or 'env'");
    t.segments.push_back({s.at("text").get<std::string>(), src == "model" ? SegmentSource::Model : SegmentSource::Env,
                          s.at("tokens").get<std::vector<TokenId>>()});
  }
  for (const auto& s : j.at("steps")) t.steps.push_back(step_from_json(s));
  t.behavior_logprobs = doubles_from_json(j.at("behavior_logprobs"));
  return t;
}

Json policy_to_json(const ToyPolicy& p) {
  Json rows = Json::array();
  for (const auto& [key, row] : p.table()) rows.push_back({{"key", key}, {"logits", doubles_to_json(row)}});
  return {{"vocab", p.vocab()}, {"context_n", p.context_n()}, {"version", p.version}, {"rows", rows}};
}

ToyPolicy policy_from_json(const Json& j) {
  ToyPolicy p(j.at("vocab").get<int>(), j.at("context_n").get<int>());
  p.version = j.at("version").get<std::int64_t>();
  for (const auto& r : j.at("rows")) {
    auto logits = doubles_from_json(r.at("logits"));
    if (logits.size() != static_cast<std::size_t>(p.vocab())) throw std::invalid_argument("policy row width mismatch");
    p.mutable_row(r.at("key").get<ContextKey>()) = std::move(logits);
  }
  return p;
}

Json item_to_json(const DatasetItem& item) {
  Json j = {{"question_id", item.question_id}, {"question", item.question}, {"ground_truth", item.ground_truth}};
  if (item.file) j["file"] = *item.file;
  j["source"] = item.source;
  if (item.level) j["level"] = *item.level;
  return j;
}

DatasetItem item_from_json(const Json& j) {
  DatasetItem item;
  item.question_id = j.at("question_id").get<std::string>();
  item.question = j.at("question").get<std::string>();
  const auto& gt = j.at("ground_truth");
  item.ground_truth = gt.is_string() ? gt.get<std::string>() : render_value(value_from_json(gt));
  item.file = opt_string(j, "file");
  item.source = j.value("source", "");
  if (auto it = j.find("level"); it != j.end() && !it->is_null())
    item.level = it->is_string() ? it->get<std::string>() : it->dump();
  return item;
}

Json metrics_to_json(const MetricsRow& r) {
  return {{"step", r.step},
          {"policy_version", r.policy_version},
          {"skipped", r.skipped},
          {"skip_reason", r.skip_reason},
          {"fresh_episodes", r.fresh_episodes},
          {"fresh_per_question", r.fresh_per_question},
          {"groups", r.groups},
          {"trajectories_consumed", r.trajectories_consumed},
          {"replacements", r.replacements},
          {"mean_group_reward", r.mean_group_reward},
          {"std_group_reward", r.std_group_reward},
          {"mean_fresh_reward", r.mean_fresh_reward},
          {"fresh_pass_rate", r.fresh_pass_rate},
          {"r_answer_mean", r.r_answer_mean},
          {"r_parse_mean", r.r_parse_mean},
          {"r_exec_mean", r.r_exec_mean},
          {"objective", json_double(r.objective)},
          {"kl_value", json_double(r.kl_value)},
          {"pass_rate_histogram", r.pass_rate_histogram},
          {"wall_clock_s", r.wall_clock_s}};
}

MetricsRow metrics_from_json(const Json& j) {
  MetricsRow r;
  r.step = j.at("step").get<std::int64_t>();
  r.policy_version = j.at("policy_version").get<std::int64_t>();
  r.skipped = j.at("skipped").get<bool>();
  r.skip_reason = j.at("skip_reason").get<std::string>();
  r.fresh_episodes = j.at("fresh_episodes").get<std::size_t>();
  r.fresh_per_question = j.at("fresh_per_question").get<std::size_t>();
  r.groups = j.at("groups").get<std::size_t>();
  r.trajectories_consumed = j.at("trajectories_consumed").get<std::size_t>();
  r.replacements = j.at("replacements").get<std::size_t>();
  r.mean_group_reward = j.at("mean_group_reward").get<double>();
  r.std_group_reward = j.at("std_group_reward").get<double>();
  r.mean_fresh_reward = j.at("mean_fresh_reward").get<double>();
  r.fresh_pass_rate = j.at("fresh_pass_rate").get<double>();
  r.r_answer_mean = j.at("r_answer_mean").get<double>();
  r.r_parse_mean = j.at("r_parse_mean").get<double>();
  r.r_exec_mean = j.at("r_exec_mean").get<double>();
  r.objective = double_from_json(j.at("objective"));
  r.kl_value = double_from_json(j.at("kl_value"));
  r.pass_rate_histogram = j.at("pass_rate_histogram").get<std::vector<std::size_t>>();
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  return r;
}

std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::vector<Json> out;
  std::size_t offset = 0, line = 0;
  while (offset < data.size()) {
    ++line;
    std::size_t nl = data.find('\n', offset);
    std::size_t end = nl == std::string::npos ? data.size() : nl;
    std::string_view text(data.data() + offset, end - offset);
    if (text.find_first_not_of(" \t\r") != std::string_view::npos) {
      // Every writer ends records with a newline; a missing one means the write was cut short.
      if (nl == std::string::npos)
        throw RecordError(fmt::format("{}: truncated record on line {} at byte offset {}", path.string(), line, offset),
                          line, offset);
      try {
        out.push_back(Json::parse(text));
      } catch (const Json::parse_error& e) {
        throw RecordError(fmt::format("{}: malformed record on line {} at byte offset {}: {}", path.string(), line,
                                      offset, e.what()),
                          line, offset);
      }
    }
    offset = end + 1;
  }
  return out;
}

JsonlWriter::JsonlWriter(const fs::path& path, bool append)
    : out_(path, append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
}

void JsonlWriter::write(const Json& record) {
  std::lock_guard lock(mu_);
  out_ << record.dump() << '\n';
  out_.flush();
}

std::vector<DatasetItem> load_dataset(const fs::path& path) {
  std::vector<DatasetItem> items;
  std::set<std::string> ids;
  for (const auto& j : read_jsonl(path)) {
    items.push_back(item_from_json(j));
    if (!ids.insert(items.back().question_id).second)
      throw std::invalid_argument(fmt::format("{}: duplicate question_id '{}'", path.string(), items.back().question_id));
  }
  return items;
}

void save_dataset(const fs::path& path, const std::vector<DatasetItem>& items) {
  JsonlWriter w(path);
  for (const auto& item : items) w.write(item_to_json(item));
}

namespace {

TurnScript script_from_json(const Json& j, const std::string& where) {
  TurnScript s;
  s.variants = j.at("variants").get<std::vector<std::vector<std::string>>>();
  if (s.variants.empty()) throw std::invalid_argument(where + ": no variants");
  for (const auto& v : s.variants)
    if (v.empty()) throw std::invalid_argument(where + ": empty variant");
  if (auto it = j.find("weights"); it != j.end()) s.weights = it->get<std::vector<double>>();
  else s.weights.assign(s.variants.size(), 1.0);
  if (s.weights.size() != s.variants.size()) throw std::invalid_argument(where + ": one weight per variant");
  double total = 0;
  for (double w : s.weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument(where + ": weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0)) throw std::invalid_argument(where + ": weights sum to zero");
  return s;
}

}  // namespace

ScriptedPolicy scripted_policy_from_json(const Json& j) {
  ScriptedPolicy policy;
  if (auto it = j.find("scripts"); it != j.end())
    for (const auto& [qid, script] : it->items()) policy.add(qid, script_from_json(script, "script " + qid));
  if (auto it = j.find("default"); it != j.end() && !it->is_null())
    policy.set_default(script_from_json(*it, "default script"));
  return policy;
}

ScriptedPolicy load_scripted_policy(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scripts " + path.string());
  try {
    return scripted_policy_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw std::invalid_argument(fmt::format("{}: {}", path.string(), e.what()));
  }
}

namespace {

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; });
    if (!ok) throw std::invalid_argument(fmt::format("unknown config key '{}{}'", where.empty() ? "" : where + ".", k));
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void RunConfig::validate() const {
  auto bad = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (episode.max_steps < 1) bad("episode.max_steps must be >= 1");
  if (!(episode.temperature > 0)) bad("episode.temperature must be > 0");
  if (episode.max_turn_tokens < 1) bad("episode.max_turn_tokens must be >= 1");
  if (episode.observation_cap < 1) bad("episode.observation_cap must be >= 1");
  if (reward.lambda_parse < 0 || reward.lambda_exec < 0) bad("reward lambdas must be >= 0");
  if (!(grpo.epsilon > 0)) bad("grpo.epsilon must be > 0");
  if (grpo.beta < 0) bad("grpo.beta must be >= 0");
  if (!(grpo.learning_rate > 0)) bad("grpo.learning_rate must be > 0");
  queue.validate();
  if (workers < 1) bad("workers must be >= 1");
  if (epochs < 0 || steps < 0) bad("epochs and steps must be >= 0");
  if (checkpoint_every < 1) bad("checkpoint_every must be >= 1");
  if (filter_samples < 1) bad("filter_samples must be >= 1");
  if (executor == ExecutorKind::Shim && shim_command.empty()) bad("executor 'shim' needs shim_command");
  if (policy == PolicyKind::Scripted && scripts_path.empty()) bad("policy 'scripted' needs scripts_path");
  if (policy == PolicyKind::Remote && (remote_endpoint.empty() || remote_model.empty()))
    bad("policy 'remote' needs remote_endpoint and remote_model");
  if (reward.judge == JudgeKind::Llm && (judge_endpoint.empty() || judge_model.empty()))
    bad("judge 'llm' needs judge_endpoint and judge_model");
}

Json config_to_json(const RunConfig& c) {
  Json j;
  j["parser"] = {{"require_end_marker", c.episode.parser.require_end_marker}, {"fence_tag", opt(c.episode.parser.fence_tag)}};
  j["limits"] = {{"max_statements", c.episode.limits.max_statements},
                 {"max_stdout", c.episode.limits.max_stdout},
                 {"max_list_length", c.episode.limits.max_list_length},
                 {"max_string_length", c.episode.limits.max_string_length},
                 {"allowed_imports", c.episode.limits.allowed_imports}};
  j["episode"] = {{"max_steps", c.episode.max_steps},
                  {"temperature", c.episode.temperature},
                  {"observation_cap", c.episode.observation_cap},
                  {"max_turn_tokens", c.episode.max_turn_tokens}};
  j["reward"] = {{"lambda_parse", c.reward.lambda_parse},
                 {"lambda_exec", c.reward.lambda_exec},
                 {"judge", c.reward.judge == JudgeKind::Rule ? "rule" : "llm"}};
  j["grpo"] = {{"epsilon", c.grpo.epsilon},
               {"beta", c.grpo.beta},
               {"learning_rate", c.grpo.learning_rate},
               {"length_normalization",
                c.grpo.length_normalization == LengthNorm::UnmaskedTokens ? "unmasked_tokens" : "all_tokens"},
               {"old_policy", c.grpo.old_policy == OldPolicy::Behavior ? "behavior" : "step_start"}};
  j["queue"] = {{"G", c.queue.G}, {"g", c.queue.g}, {"pass_lo", c.queue.pass_lo}, {"pass_hi", c.queue.pass_hi}};
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["steps"] = c.steps;
  j["checkpoint_every"] = c.checkpoint_every;
  j["filter_samples"] = c.filter_samples;
  j["executor"] = c.executor == ExecutorKind::Builtin ? "builtin" : "shim";
  j["shim_command"] = c.shim_command;
  j["policy"] = c.policy == PolicyKind::Toy ? "toy" : c.policy == PolicyKind::Scripted ? "scripted" : "remote";
  j["scripts_path"] = c.scripts_path;
  j["remote_endpoint"] = c.remote_endpoint;
  j["remote_model"] = c.remote_model;
  j["judge_endpoint"] = c.judge_endpoint;
  j["judge_model"] = c.judge_model;
  j["tools"] = c.tools == ToolBackendKind::Fixture ? "fixture" : "live";
  j["fixture_paths"] = c.fixture_paths;
  j["system_prompt_path"] = c.system_prompt_path;
  j["judge_prompt_path"] = c.judge_prompt_path;
  j["run_dir"] = c.run_dir;
  j["toy_task"] = c.toy_task;
  return j;
}

RunConfig config_from_json(const Json& j) {
  RunConfig c;
  check_keys(j, "",
             {"parser", "limits", "episode", "reward", "grpo", "queue", "seed", "workers", "batch_size", "epochs",
              "steps", "checkpoint_every", "filter_samples", "executor", "shim_command", "policy", "scripts_path",
              "remote_endpoint", "remote_model", "judge_endpoint", "judge_model", "tools", "fixture_paths",
              "system_prompt_path", "judge_prompt_path", "run_dir", "toy_task"});
  if (auto it = j.find("parser"); it != j.end()) {
    check_keys(*it, "parser", {"require_end_marker", "fence_tag"});
    read(*it, "require_end_marker", c.episode.parser.require_end_marker);
    c.episode.parser.fence_tag = opt_string(*it, "fence_tag");
  }
  if (auto it = j.find("limits"); it != j.end()) {
    check_keys(*it, "limits", {"max_statements", "max_stdout", "max_list_length", "max_string_length", "allowed_imports"});
    auto& l = c.episode.limits;
    read(*it, "max_statements", l.max_statements);
    read(*it, "max_stdout", l.max_stdout);
    read(*it, "max_list_length", l.max_list_length);
    read(*it, "max_string_length", l.max_string_length);
    read(*it, "allowed_imports", l.allowed_imports);
  }
  if (auto it = j.find("episode"); it != j.end()) {
    check_keys(*it, "episode", {"max_steps", "temperature", "observation_cap", "max_turn_tokens"});
    read(*it, "max_steps", c.episode.max_steps);
    read(*it, "temperature", c.episode.temperature);
    read(*it, "observation_cap", c.episode.observation_cap);
    read(*it, "max_turn_tokens", c.episode.max_turn_tokens);
  }
  if (auto it = j.find("reward"); it != j.end()) {
    check_keys(*it, "reward", {"lambda_parse", "lambda_exec", "judge"});
    read(*it, "lambda_parse", c.reward.lambda_parse);
    read(*it, "lambda_exec", c.reward.lambda_exec);
    std::string judge = c.reward.judge == JudgeKind::Rule ? "rule" : "llm";
    read(*it, "judge", judge);
    if (judge != "rule" && judge != "llm") throw std::invalid_argument("reward.judge must be 'rule' or 'llm'");
    c.reward.judge = judge == "rule" ? JudgeKind::Rule : JudgeKind::Llm;
  }
  if (auto it = j.find("grpo"); it != j.end()) {
    check_keys(*it, "grpo", {"epsilon", "beta", "learning_rate", "length_normalization", "old_policy"});
    read(*it, "epsilon", c.grpo.epsilon);
    read(*it, "beta", c.grpo.beta);
    read(*it, "learning_rate", c.grpo.learning_rate);
    std::string ln = "unmasked_tokens", old = "behavior";
    read(*it, "length_normalization", ln);
    read(*it, "old_policy", old);
    if (ln != "unmasked_tokens" && ln != "all_tokens")
      throw std::invalid_argument("grpo.length_normalization must be 'unmasked_tokens' or 'all_tokens'");
    if (old != "behavior" && old != "step_start")
      throw std::invalid_argument("grpo.old_policy must be 'behavior' or 'step_start'");
    c.grpo.length_normalization = ln == "all_tokens" ? LengthNorm::AllTokens : LengthNorm::UnmaskedTokens;
    c.grpo.old_policy = old == "step_start" ? OldPolicy::StepStart : OldPolicy::Behavior;
  }
  if (auto it = j.find("queue"); it != j.end()) {
    check_keys(*it, "queue", {"G", "g", "pass_lo", "pass_hi"});
    read(*it, "G", c.queue.G);
    read(*it, "g", c.queue.g);
    read(*it, "pass_lo", c.queue.pass_lo);
    read(*it, "pass_hi", c.queue.pass_hi);
  }
  read(j, "seed", c.seed);
  read(j, "workers", c.workers);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "steps", c.steps);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "filter_samples", c.filter_samples);
  std::string executor = "builtin", policy = "toy", tools = "fixture";
  read(j, "executor", executor);
  read(j, "policy", policy);
  read(j, "tools", tools);
  if (executor != "builtin" && executor != "shim") throw std::invalid_argument("executor must be 'builtin' or 'shim'");
  c.executor = executor == "shim" ? ExecutorKind::Shim : ExecutorKind::Builtin;
  if (policy == "toy") c.policy = PolicyKind::Toy;
  else if (policy == "scripted") c.policy = PolicyKind::Scripted;
  else if (policy == "remote") c.policy = PolicyKind::Remote;
  else throw std::invalid_argument("policy must be 'toy', 'scripted' or 'remote'");
  if (tools != "fixture" && tools != "live") throw std::invalid_argument("tools must be 'fixture' or 'live'");
  c.tools = tools == "live" ? ToolBackendKind::Live : ToolBackendKind::Fixture;
  read(j, "shim_command", c.shim_command);
  read(j, "scripts_path", c.scripts_path);
  read(j, "remote_endpoint", c.remote_endpoint);
  read(j, "remote_model", c.remote_model);
  read(j, "judge_endpoint", c.judge_endpoint);
  read(j, "judge_model", c.judge_model);
  read(j, "fixture_paths", c.fixture_paths);
  read(j, "system_prompt_path", c.system_prompt_path);
  read(j, "judge_prompt_path", c.judge_prompt_path);
  read(j, "run_dir", c.run_dir);
  read(j, "toy_task", c.toy_task);
  c.grpo.temperature = c.episode.temperature;
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(fmt::format("{}: {}", path.string(), e.what()));
  }
  RunConfig cfg = config_from_json(j);
  // Relative paths inside the config resolve against its directory.
  const fs::path base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(cfg.scripts_path);
  resolve(cfg.system_prompt_path);
  resolve(cfg.judge_prompt_path);
  for (auto& f : cfg.fixture_paths) resolve(f);
  return cfg;
}

RunDir::RunDir(fs::path root) : root_(std::move(root)) {}

RunDir RunDir::create(const fs::path& root, const RunConfig& cfg) {
  fs::create_directories(root / "checkpoints");
  fs::create_directories(root / "shards");
  RunDir dir(root);
  std::ofstream out(dir.config_path());
  out << config_to_json(cfg).dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + dir.config_path().string());
  return dir;
}

void RunDir::write_checkpoint(std::int64_t step, const std::string& state) const {
  fs::create_directories(checkpoint_dir());
  const auto final_path = checkpoint_dir() / fmt::format("step_{:08d}.json", step);
  const auto tmp = fs::path(final_path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << state;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, final_path);
}

std::optional<std::pair<std::int64_t, std::string>> RunDir::latest_checkpoint() const {
  if (!fs::exists(checkpoint_dir())) return std::nullopt;
  std::optional<std::pair<std::int64_t, fs::path>> best;
  for (const auto& e : fs::directory_iterator(checkpoint_dir())) {
    auto name = e.path().filename().string();
    if (name.rfind("step_", 0) != 0 || e.path().extension() != ".json") continue;
    std::int64_t step = std::stoll(name.substr(5, name.size() - 10));
    if (!best || step > best->first) best = {step, e.path()};
  }
  if (!best) return std::nullopt;
  std::ifstream in(best->second, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return std::make_pair(best->first, ss.str());
}

}  // namespace toolr1
