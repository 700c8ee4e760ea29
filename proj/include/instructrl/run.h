// Copyright 2026 The instructrl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configs and the train workflow behind the CLI: resolve the prior
// (building and caching it when needed), train, and write checkpoints and
// curves. Also the Say-Select checkpoint format and a loader that accepts
// either checkpoint kind.

#ifndef INSTRUCTRL_RUN_H_
#define INSTRUCTRL_RUN_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "instructrl/config.h"
#include "instructrl/game.h"
#include "instructrl/hanabi_learn.h"
#include "instructrl/prior.h"
#include "instructrl/say_select_train.h"
#include "json.hpp"

namespace instructrl {

inline constexpr int kRunConfigVersion = 1;

enum class Learner { kSaySelectTabular, kInstructQ, kInstructPPO };
std::string to_string(Learner l);
Learner learner_from_string(const std::string& s);

// Env preset name ("say_select", "hanabi_mini", "hanabi_full") or a full
// EnvConfig object. Throws ConfigError.
EnvConfig env_from_json(const nlohmann::json& j);

struct RunConfig {
  std::string name = "run";
  EnvConfig env = EnvConfig::say_select_default();
  Learner learner = Learner::kSaySelectTabular;
  // Instruction key; empty trains the vanilla (lambda = 0) variant.
  std::string instruction;
  // Empty picks the default for the instruction (oracle for the Hanabi
  // instructions, scripted completion for Say-Select).
  std::string backend;
  nlohmann::json backend_options = nlohmann::json::object();
  std::optional<double> beta;  // default: the learner's
  // Prior table file; built on first use. Default: <out>/prior.json.
  std::optional<std::filesystem::path> prior_cache;
  // Learner config fields, applied over the learner's defaults.
  nlohmann::json train = nlohmann::json::object();
  uint64_t seed = 0;
  int threads = 1;  // 1 = deterministic mode
  std::filesystem::path out = "runs/run";

  // Throws ConfigError.
  void validate() const;
  std::string resolved_backend() const;
  std::filesystem::path resolved_prior_cache() const;
};
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

// Loads the cached prior or builds it with the configured backend (resuming
// a partial cache). Null for vanilla runs.
std::shared_ptr<const PriorTable> resolve_prior(const RunConfig& config,
                                                const std::function<void(const std::string&)>& log = nullptr);

SaySelectTrainConfig say_select_train_config(const RunConfig& config);
HanabiTrainConfig hanabi_train_config(const RunConfig& config);

// Trained Say-Select pair plus what is needed to act with it.
struct SaySelectCheckpoint {
  nlohmann::json run_config;
  SaySelectTrainConfig train_config;
  SaySelectTrainResult result;
  std::shared_ptr<const PriorTable> prior;  // null for vanilla
  double beta = 1.0;
};
nlohmann::json say_select_checkpoint_to_json(const SaySelectCheckpoint& c);
SaySelectCheckpoint say_select_checkpoint_from_json(const nlohmann::json& j);
// The greedy pair the checkpoint describes (Bob folds in the final lambda).
std::shared_ptr<SaySelectTablePolicy> make_table_policy(const SaySelectCheckpoint& c);

using AnyCheckpoint = std::variant<SaySelectCheckpoint, HanabiTrainResult>;
// Dispatches on the "format" field.
AnyCheckpoint load_any_checkpoint(const std::filesystem::path& path);
const EnvConfig& checkpoint_env(const AnyCheckpoint& c);
// Writes JSON through a temporary file and a rename.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path curve_csv;
  std::filesystem::path run_config;
};
// Trains per the config and writes <out>/checkpoint.json, <out>/curve.csv and
// <out>/run_config.json. With threads = 1 the checkpoint is a function of the
// config alone.
TrainOutputs run_training(const RunConfig& config,
                          const std::function<void(const std::string&)>& log = nullptr);

}  // namespace instructrl

#endif  // INSTRUCTRL_RUN_H_
