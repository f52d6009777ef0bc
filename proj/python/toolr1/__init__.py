# SPDX-License-Identifier: Apache-2.0
"""Python front end for the toolr1 C++ core.

Configs are plain dicts in the run-config JSON shape. `load_config` resolves
relative paths against the config file, like the CLI does.
"""
import json
import os

from . import _toolr1
from ._toolr1 import (
    code_rewards,
    kl_term,
    normalize_advantages,
    normalize_answer,
    rule_judge,
    token_term,
    total_reward,
)

__all__ = [
    "Interpreter", "code_rewards", "default_config", "evaluate", "filter_dataset", "kl_term",
    "load_config", "normalize_advantages", "normalize_answer", "parse_turn", "replay", "rollout",
    "rule_judge", "synth", "token_term", "total_reward", "train",
]

def _text(config):
    return _toolr1.normalize_config(json.dumps(config))

def default_config():
    return json.loads(_toolr1.default_config())

def load_config(path):
    return json.loads(_toolr1.load_config(os.fspath(path)))

def replay(file, question_id=""):
    return _toolr1.replay(os.fspath(file), question_id)

def parse_turn(text):
    return json.loads(_toolr1.parse_turn(text))

class Interpreter:
    """One persistent namespace of the restricted interpreter (no tools)."""

    def __init__(self):
        self._impl = _toolr1.Interpreter()

    def run(self, code):
        return json.loads(self._impl.run(code))

    def __getitem__(self, name):
        return json.loads(self._impl.binding(name))

def rollout(config, dataset, n, out):
    return _toolr1.rollout(_text(config), os.fspath(dataset), n, os.fspath(out))

def filter_dataset(config, dataset, out, report):
    return json.loads(_toolr1.filter(_text(config), os.fspath(dataset), os.fspath(out), os.fspath(report)))

def evaluate(config, dataset):
    return json.loads(_toolr1.evaluate(_text(config), os.fspath(dataset)))

def train(config, dataset, resume=False):
    return json.loads(_toolr1.train(_text(config), os.fspath(dataset), resume))

def synth(n, seed, directory):
    return json.loads(_toolr1.synth(n, seed, os.fspath(directory)))
