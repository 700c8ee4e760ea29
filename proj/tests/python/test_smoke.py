# Copyright 2026 The instructrl Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke tests for the Python bindings."""

import json

import numpy as np
import pytest

import instructrl as irl


def test_seed_streams_are_distinct():
    assert irl.derive_seed(1, 7) == irl.derive_seed(1, 7)
    assert irl.derive_seed(1, 7) != irl.derive_seed(1, 3)


def test_env_presets():
    mini = irl.env_config("hanabi_mini")
    assert mini["hanabi"]["num_colors"] == 2
    with pytest.raises(irl.ConfigError):
        irl.env_config("chess")


def test_random_hanabi_game_score_matches_rewards():
    rng = np.random.default_rng(0)
    s = irl.State("hanabi_mini", 3)
    total = 0
    while not s.is_terminal:
        legal = s.legal_actions()
        total += s.apply_action(int(rng.choice(legal)))
    assert total == s.score
    assert s.legal_actions() == []


def test_illegal_action_raises():
    s = irl.State("hanabi_mini", 0)
    illegal = sorted(set(range(s.num_actions)) - set(s.legal_actions()))
    assert illegal, "fresh mini state should have at least one illegal action"
    with pytest.raises(irl.ContractViolation):
        s.apply_action(illegal[0])


def test_features_are_redacted_per_observer():
    s = irl.State("hanabi_mini", 5)
    f0, f1 = s.features(0), s.features(1)
    assert f0.dtype == np.float32 and f0.shape == (148,)
    assert not np.array_equal(f0, f1)
    clone = s.clone()
    clone.apply_action(clone.legal_actions()[0])
    assert s.move_number == 0 and clone.move_number == 1
    json.dumps(s.to_dict())


def test_prior_roundtrip_and_corruption():
    assert len(irl.enumerate_pairs("hanabi_full")) == 3852
    color = irl.build_prior("hanabi_full", "color", "oracle_color")
    assert irl.prior_accuracy(color, color) == 1.0
    noisy = irl.corrupt_prior(color, 0.1, 4)
    assert irl.prior_accuracy(noisy, color) == pytest.approx(1 - 385 / 3852, abs=1e-12)


def test_say_select_train_and_evaluate(tmp_path):
    config = {
        "format": "instructrl.run_config",
        "version": 1,
        "name": "py_smoke",
        "env": "say_select",
        "learner": "say_select_tabular",
        "instruction": "say_select",
        "train": {"num_updates": 200},
        "seed": 0,
        "threads": 1,
        "out": str(tmp_path / "run"),
    }
    out = irl.train(config)
    report = irl.evaluate(out["checkpoint"])
    assert 0 < report["expected_return"] <= report["optimal_return"] + 1e-9
    again = irl.train(dict(config, out=str(tmp_path / "again")))
    with open(out["checkpoint"]) as a, open(again["checkpoint"]) as b:
        first, second = json.load(a), json.load(b)
    for key in ("alice", "bob", "curve"):
        assert first[key] == second[key]


def test_bad_run_config_is_a_config_error(tmp_path):
    with pytest.raises(irl.ConfigError):
        irl.train({"format": "instructrl.run_config", "version": 1, "env": "say_select",
                   "learner": "nope", "out": str(tmp_path)})
