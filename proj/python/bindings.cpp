// SPDX-License-Identifier: Apache-2.0
// Python bindings. Structured results cross the boundary as JSON text; the
// toolr1 package turns them into dicts.
#include "toolr1/commands.hpp"
#include "toolr1/grpo.hpp"
#include "toolr1/interpreter.hpp"
#include "toolr1/reward.hpp"
#include "toolr1/turn_parser.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace toolr1;

namespace {

RunConfig config_from_text(const std::string& text) { return config_from_json(Json::parse(text)); }

std::string parse_turn_json(const std::string& text) {
  auto r = parse_turn(text);
  if (auto* p = std::get_if<ParsedStep>(&r))
    return Json{{"ok", true}, {"thought", p->thought}, {"code", p->code}, {"trailing_text", p->trailing_text}}.dump();
  const auto& f = std::get<ParseFailure>(r);
  return Json{{"ok", false}, {"kind", to_string(f.kind)}, {"begin", f.begin}, {"end", f.end}}.dump();
}

class Interpreter {
 public:
  std::string run(const std::string& code) {
    NullToolHost host;
    auto r = run_code(code, ns_, host, limits_);
    Json out{{"syntax_error", nullptr}, {"stdout", r.outcome.stdout_text}, {"error", nullptr}};
    if (r.syntax_error) out["syntax_error"] = r.syntax_error->describe();
    if (r.outcome.error)
      out["error"] = {{"kind", to_string(r.outcome.error->kind)}, {"message", r.outcome.error->message}};
    return out.dump();
  }
  std::string binding(const std::string& name) const {
    auto it = ns_.bindings.find(name);
    if (it == ns_.bindings.end()) throw py::key_error(name);
    return value_to_json(it->second).dump();
  }

 private:
  Namespace ns_;
  ExecLimits limits_;
};

}  // namespace

PYBIND11_MODULE(_toolr1, m) {
  m.doc() = "Native core of the toolr1 package";

  m.def("parse_turn", &parse_turn_json, py::arg("text"));

  py::class_<Interpreter>(m, "Interpreter")
      .def(py::init<>())
      .def("run", &Interpreter::run, py::arg("code"))
      .def("binding", &Interpreter::binding, py::arg("name"));

  m.def("normalize_answer", [](const std::string& s) { return normalize_answer(s); });
  m.def("rule_judge", [](const std::string& gt, const std::string& pred) { return std::string(to_string(rule_judge(gt, pred))); },
        py::arg("ground_truth"), py::arg("predicted"));
  m.def(
      "total_reward",
      [](const std::string& judgment, double r_parse, double r_exec, double lambda_parse, double lambda_exec) {
        RewardConfig cfg;
        cfg.lambda_parse = lambda_parse;
        cfg.lambda_exec = lambda_exec;
        return total_reward(judgment_from_string(judgment), r_parse, r_exec, cfg).total;
      },
      py::arg("judgment"), py::arg("r_parse"), py::arg("r_exec"), py::arg("lambda_parse") = 0.3,
      py::arg("lambda_exec") = 0.3);
  m.def(
      "code_rewards",
      [](std::size_t total, std::size_t parsed, std::size_t executed) {
        auto c = code_rewards(total, parsed, executed);
        return std::make_pair(c.r_parse, c.r_exec);
      },
      py::arg("n_total"), py::arg("n_parsed"), py::arg("n_executed"));

  m.def("normalize_advantages", [](const std::vector<double>& r) { return normalize_advantages(r); });
  m.def("token_term", &token_term, py::arg("logprob_new"), py::arg("logprob_old"), py::arg("advantage"),
        py::arg("epsilon") = 0.2);
  m.def("kl_term", &kl_term, py::arg("logprob_theta"), py::arg("logprob_ref"));

  m.def("default_config", [] { return config_to_json(RunConfig{}).dump(); });
  m.def("load_config", [](const std::string& path) { return config_to_json(load_config(path)).dump(); });
  m.def("normalize_config", [](const std::string& text) { return config_to_json(config_from_text(text)).dump(); });

  m.def(
      "rollout",
      [](const std::string& cfg, const std::string& dataset, int n, const std::string& out) {
        auto c = config_from_text(cfg);
        auto items = load_dataset(dataset);
        py::gil_scoped_release release;
        return cmd_rollout(c, items, n, out);
      },
      py::arg("config"), py::arg("dataset"), py::arg("n"), py::arg("out"));
  m.def(
      "filter",
      [](const std::string& cfg, const std::string& dataset, const std::string& out, const std::string& report) {
        auto c = config_from_text(cfg);
        auto items = load_dataset(dataset);
        py::gil_scoped_release release;
        Json kept = Json::array();
        for (const auto& it : cmd_filter(c, items, out, report).kept()) kept.push_back(it.question_id);
        return kept.dump();
      },
      py::arg("config"), py::arg("dataset"), py::arg("out"), py::arg("report"));
  m.def(
      "evaluate",
      [](const std::string& cfg, const std::string& dataset) {
        auto c = config_from_text(cfg);
        auto items = load_dataset(dataset);
        py::gil_scoped_release release;
        return eval_report_to_json(cmd_eval(c, items)).dump();
      },
      py::arg("config"), py::arg("dataset"));
  m.def(
      "train",
      [](const std::string& cfg, const std::string& dataset, bool resume) {
        auto c = config_from_text(cfg);
        auto items = load_dataset(dataset);
        py::gil_scoped_release release;
        Json rows = Json::array();
        for (const auto& r : cmd_train(c, items, resume)) rows.push_back(metrics_to_json(r));
        return rows.dump();
      },
      py::arg("config"), py::arg("dataset"), py::arg("resume") = false);
  m.def(
      "replay", [](const std::string& file, const std::string& id) { return cmd_replay(file, id); }, py::arg("file"), py::arg("question_id") = "");
  m.def(
      "synth", [](std::size_t n, std::uint64_t seed, const std::string& dir) { return config_to_json(cmd_synth(n, seed, dir)).dump(); },
      py::arg("n"), py::arg("seed"), py::arg("dir"));
}
