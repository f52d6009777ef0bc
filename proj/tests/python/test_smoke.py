# SPDX-License-Identifier: Apache-2.0
import json
import math
import os
import pathlib

import pytest

import toolr1

ROOT = pathlib.Path(os.environ.get("TOOLR1_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
TRACES = ROOT / "fixtures" / "traces"


def test_parse_turn():
    ok = toolr1.parse_turn("Thought: add.\nCode:\n```py\nprint(1 + 1)\n```<end_code>")
    assert ok["ok"] and ok["code"] == "print(1 + 1)" and ok["thought"] == "add."
    bad = toolr1.parse_turn("no structure here")
    assert not bad["ok"] and bad["kind"] == "MissingThought"


def test_interpreter_keeps_state():
    it = toolr1.Interpreter()
    assert it.run("x = 363104 * (2.0167 / 42.195)")["error"] is None
    assert it.run("print(round(x / 1000))")["stdout"] == "17\n"
    assert it["x"] == pytest.approx(363104 * (2.0167 / 42.195))
    denied = it.run("import os")
    assert denied["error"]["kind"] == "ImportError"
    assert it.run("def (")["syntax_error"]


def test_reward_and_grpo_helpers():
    assert toolr1.rule_judge("Berkshire", "berkshire.") == "Correct"
    assert toolr1.total_reward("Correct", 1.0, 1.0) == pytest.approx(1.6)
    assert toolr1.total_reward("Partially Correct", 0.5, 0.5) == pytest.approx(0.8)
    assert toolr1.code_rewards(4, 2, 1) == (0.5, 0.5)
    assert toolr1.normalize_advantages([1.6, 0.6]) == pytest.approx([1.0, -1.0])
    assert toolr1.normalize_advantages([0.8] * 8) == [0.0] * 8
    assert toolr1.token_term(math.log(1.5), 0.0, 1.0) == pytest.approx(1.2)
    assert toolr1.kl_term(-1.0, -1.0) == 0.0


def test_config_round_trip():
    cfg = toolr1.default_config()
    assert cfg["grpo"]["beta"] == 0.001 and cfg["queue"]["G"] == 16
    cfg["bogus"] = 1
    with pytest.raises(Exception, match="bogus"):
        toolr1.evaluate(cfg, TRACES / "dataset.jsonl")


def test_eval_and_replay(tmp_path):
    cfg = toolr1.load_config(TRACES / "config.json")
    cfg["run_dir"] = str(tmp_path / "run")
    report = toolr1.evaluate(cfg, TRACES / "dataset.jsonl")
    assert report["ans_acc"] == 1.0
    out = tmp_path / "t.jsonl"
    assert toolr1.rollout(cfg, TRACES / "dataset.jsonl", 1, out) == 5
    assert "Observation: 6" in toolr1.replay(str(out), "honey_mayonnaise")


def test_synth_and_train(tmp_path):
    toolr1.synth(6, 1, tmp_path)
    cfg = toolr1.load_config(tmp_path / "config.json")
    cfg["steps"] = 2
    cfg["run_dir"] = str(tmp_path / "run")
    rows = toolr1.train(cfg, tmp_path / "dataset.jsonl")
    assert [r["step"] for r in rows] == [1, 2]
    assert all(r["fresh_per_question"] == 8 for r in rows)
    lines = (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(l)["step"] for l in lines] == [1, 2]
