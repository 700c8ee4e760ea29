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

"""Python surface of instructrl.

Configs, prior tables, eval reports and checkpoints are plain dicts with the
same JSON schemas the CLI reads and writes.
"""

from instructrl._core import (
    ConfigError,
    ContractViolation,
    State,
    build_prior,
    corrupt_prior,
    derive_seed,
    enumerate_pairs,
    env_config,
    evaluate,
    prior_accuracy,
    say_select_optimal_return,
    train,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "State",
    "build_prior",
    "corrupt_prior",
    "derive_seed",
    "enumerate_pairs",
    "env_config",
    "evaluate",
    "prior_accuracy",
    "say_select_optimal_return",
    "train",
]
