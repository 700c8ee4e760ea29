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

// Network learners for Hanabi self-play: value-based instructQ with replay
// and a target network, and instructPPO. Both seats share one network.

#ifndef INSTRUCTRL_HANABI_LEARN_H_
#define INSTRUCTRL_HANABI_LEARN_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instructrl/config.h"
#include "instructrl/game.h"
#include "instructrl/hanabi.h"
#include "instructrl/hanabi_features.h"
#include "instructrl/learn.h"
#include "instructrl/nn.h"
#include "instructrl/prior.h"
#include "json.hpp"

namespace instructrl {

enum class HanabiLearner { kInstructQ, kInstructPPO };
std::string to_string(HanabiLearner l);
HanabiLearner hanabi_learner_from_string(const std::string& s);

struct HanabiTrainConfig {
  EnvConfig env = EnvConfig::hanabi_mini();
  HanabiLearner learner = HanabiLearner::kInstructQ;
  std::vector<int> hidden = {128, 128};
  Activation activation = Activation::kRelu;
  LambdaSchedule lambda = LambdaSchedule::instructq_default(20000);
  double beta = 1.0;
  AdamConfig adam{.lr = 5e-4};
  double max_grad_norm = 5.0;
  int64_t num_updates = 20000;
  uint64_t seed = 0;
  int threads = 1;  // rollout workers; results do not depend on this

  // instructQ. Exploration decays linearly from epsilon_start to epsilon over
  // the first epsilon_decay_fraction of the run.
  int num_envs = 32;
  int env_steps_per_update = 1;  // vectorized steps (num_envs moves each)
  int batch_size = 128;
  int replay_capacity = 50000;
  int learning_starts = 2000;  // transitions before the first update
  int target_period = 250;     // updates between target-network copies
  double epsilon_start = 0.05;
  double epsilon = 0.05;
  double epsilon_decay_fraction = 0.25;

  // instructPPO.
  int batch_episodes = 32;
  int ppo_epochs = 4;
  int minibatch_size = 256;
  double clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  bool normalize_advantages = true;

  // Greedy self-play checks during training.
  int64_t eval_every = 2000;
  int eval_games = 200;

  // Learner-specific defaults for a run of num_updates updates.
  static HanabiTrainConfig instructq_defaults(int64_t num_updates = 20000);
  static HanabiTrainConfig instructppo_defaults(int64_t num_updates = 600);

  double epsilon_at(int64_t update) const;
  void validate() const;  // throws ConfigError
};
void to_json(nlohmann::json& j, const HanabiTrainConfig& c);
// Missing keys take the defaults of the named learner.
void from_json(const nlohmann::json& j, HanabiTrainConfig& c);

// A trained Hanabi policy. Q agents act by argmax of Q + lambda log p over
// legal actions (lambda is the training-time value at the end of the run);
// PPO agents act by argmax of their policy logits.
class HanabiAgent {
 public:
  HanabiAgent() = default;
  HanabiAgent(HanabiLearner kind, EnvConfig env, Mlp<float> net,
              std::shared_ptr<const PriorTable> prior, double beta, double lambda);

  HanabiLearner kind() const { return kind_; }
  const EnvConfig& env() const { return env_; }
  const Mlp<float>& net() const { return net_; }
  const HanabiEncoder& encoder() const { return encoder_; }
  const std::shared_ptr<const PriorTable>& prior() const { return prior_; }
  const CompiledHanabiPrior* compiled_prior() const { return compiled_.get(); }
  double beta() const { return beta_; }
  double lambda() const { return lambda_; }
  // The prior term is used only when lambda > 0 and a prior is attached.
  bool uses_prior() const { return prior_ && lambda_ > 0.0; }

  // Raw network outputs for the acting player: Q values, or policy logits
  // (value column dropped).
  std::vector<double> action_values(const HanabiState& state) const;
  // Greedy action. pure_q drops the prior term.
  int greedy_action(const HanabiState& state, bool pure_q = false) const;
  // Same for many states at once (one forward pass).
  void greedy_actions(std::span<const HanabiState* const> states, std::span<int> out,
                      bool pure_q = false) const;

  // Copy acting with argmax(Q + lambda log p) under another prior. Q agents only.
  HanabiAgent adapted(std::shared_ptr<const PriorTable> prior, double lambda) const;

  nlohmann::json to_json() const;
  static HanabiAgent from_json(const nlohmann::json& j);

 private:
  HanabiLearner kind_ = HanabiLearner::kInstructQ;
  EnvConfig env_;
  Mlp<float> net_;
  HanabiEncoder encoder_;
  std::shared_ptr<const PriorTable> prior_;
  std::shared_ptr<const CompiledHanabiPrior> compiled_;
  double beta_ = 1.0;
  double lambda_ = 0.0;
};

// Test-time adaptation: the frozen Q function acts by argmax(Q + lambda log p).
HanabiAgent adapt_policy(const HanabiAgent& base, std::shared_ptr<const PriorTable> prior,
                         double lambda);

// game-core Policy wrapper (greedy).
class HanabiAgentPolicy final : public Policy {
 public:
  explicit HanabiAgentPolicy(std::shared_ptr<const HanabiAgent> agent, bool pure_q = false)
      : agent_(std::move(agent)), pure_q_(pure_q) {}
  Decision decide(const State& state, Rng& rng) override;
  std::string name() const override;

 private:
  std::shared_ptr<const HanabiAgent> agent_;
  bool pure_q_;
};

// Lockstep greedy play of many games. Game i starts from seeds[i]; seat s is
// controlled by seating[i][s]. The observer, if set, sees every move before it
// is applied, in game order within each lockstep round.
struct HanabiGameResult {
  uint64_t seed = 0;
  int score = 0;
  bool lost = false;  // out of lives
  int moves = 0;
  double discounted_return = 0.0;
};
using HanabiMoveObserver = std::function<void(size_t game, const HanabiState& before, int action)>;
std::vector<HanabiGameResult> play_hanabi_games(
    const EnvConfig& env, std::span<const uint64_t> seeds,
    std::span<const std::array<const HanabiAgent*, 2>> seating, bool pure_q = false,
    const HanabiMoveObserver& observer = nullptr);

struct HanabiCurvePoint {
  int64_t update = 0;
  double lambda = 0.0;
  double epsilon = 0.0;
  int64_t env_steps = 0;
  int64_t games = 0;
  double loss = 0.0;           // mean training loss since the previous point
  double selfplay_score = 0.0;  // greedy self-play mean over eval_games
  double seconds = 0.0;
};
void to_json(nlohmann::json& j, const HanabiCurvePoint& p);
void from_json(const nlohmann::json& j, HanabiCurvePoint& p);

struct HanabiTrainResult {
  HanabiTrainConfig config;
  HanabiAgent agent;
  std::vector<float> target_params;  // instructQ only
  AdamState<float> adam;
  std::string rng_state;  // replay / minibatch sampler
  int64_t update = 0;
  int64_t env_steps = 0;
  std::vector<HanabiCurvePoint> curve;
};

struct HanabiTrainHooks {
  std::function<void(const HanabiCurvePoint&)> on_eval;
};

// prior may be null (vanilla). Throws ConfigError on an invalid config or a
// prior for another environment.
HanabiTrainResult train_hanabi(const HanabiTrainConfig& config,
                               std::shared_ptr<const PriorTable> prior,
                               const HanabiTrainHooks& hooks = {});

// Checkpoint container (JSON). run_config is echoed verbatim.
inline constexpr int kCheckpointFormatVersion = 1;
nlohmann::json checkpoint_to_json(const HanabiTrainResult& result,
                                  const nlohmann::json& run_config = nullptr);
HanabiTrainResult checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const HanabiTrainResult& result,
                     const nlohmann::json& run_config = nullptr);
HanabiTrainResult load_checkpoint(const std::filesystem::path& path);

}  // namespace instructrl

#endif  // INSTRUCTRL_HANABI_LEARN_H_
