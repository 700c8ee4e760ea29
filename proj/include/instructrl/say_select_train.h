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

// Tabular training for Say-Select: Alice learns plain Q-learning, Bob learns
// instructQ against the Say-Select prior (or plain Q-learning without one).

#ifndef INSTRUCTRL_SAY_SELECT_TRAIN_H_
#define INSTRUCTRL_SAY_SELECT_TRAIN_H_

#include <array>
#include <optional>
#include <vector>

#include "instructrl/config.h"
#include "instructrl/game.h"
#include "instructrl/learn.h"
#include "instructrl/prior.h"
#include "instructrl/say_select.h"
#include "json.hpp"

namespace instructrl {

struct SaySelectTrainConfig {
  EnvConfig env = EnvConfig::say_select_default();
  double epsilon = 0.15;
  LambdaSchedule bob_lambda = LambdaSchedule::constant(0.25);
  double lr = 0.02;
  int batch_episodes = 64;
  int num_updates = 3000;
  double beta = 1.0;
  uint64_t seed = 0;
  int eval_every = 50;
  double plateau_tolerance = 1e-9;

  void validate() const;
};
void to_json(nlohmann::json& j, const SaySelectTrainConfig& c);
void from_json(const nlohmann::json& j, SaySelectTrainConfig& c);

struct SaySelectCurvePoint {
  int update = 0;
  double lambda = 0.0;
  double behavior_return = 0.0;  // mean discounted return of the batch
  double greedy_return = 0.0;    // exact expected return of the greedy pair
};

struct SaySelectTrainResult {
  QTable alice{SaySelectState::kNumAliceKeys, SaySelectState::kNumActions};
  QTable bob{SaySelectState::kNumBobKeys, SaySelectState::kNumActions};
  std::vector<SaySelectCurvePoint> curve;
  // First evaluated update after which the greedy return never moved by more
  // than the plateau tolerance.
  int plateau_update = -1;
  double final_lambda = 0.0;
};

// `bob_prior` null trains the vanilla pair.
SaySelectTrainResult train_say_select(const SaySelectTrainConfig& config,
                                      const PriorTable* bob_prior);

// Greedy actions of the trained pair. Bob includes lambda * log p when a
// prior is given.
int alice_greedy_action(const QTable& alice, int alice_key);
int bob_greedy_action(const QTable& bob, const SaySelectLogPrior* prior, double lambda,
                      int bob_key);

struct SaySelectExactEval {
  double expected_return = 0.0;  // discounted, over k ~ U{1..5} and positions
  double expected_score = 0.0;   // undiscounted
  std::array<double, 32> return_by_mask{};
};
// Plays the greedy pair on all 31 nonempty ball assignments, weighting each
// by P(k) / C(5, k).
SaySelectExactEval evaluate_say_select_exact(const QTable& alice, const QTable& bob,
                                             const SaySelectLogPrior* prior, double lambda,
                                             const EnvConfig& env);

// Best expected discounted return of any pair, by dynamic programming over
// (positive-ball mask, moves left) with full information. Decentralized play
// can only match it.
double say_select_optimal_return(const EnvConfig& env);

// Bob's greedy action on every (two_ago, one_ago) cell; row 0 is "none".
using BobGrid = std::array<std::array<int, 6>, 6>;
BobGrid bob_policy_grid(const QTable& bob, const SaySelectLogPrior* prior, double lambda);
// Cells Bob can face: (none, x) and (y, x) for x, y in 1..5.
bool is_reachable_bob_cell(int two_ago, int one_ago);
// Pick what Alice said last, quit when she repeats herself.
int intuitive_bob_action(int two_ago, int one_ago);
// Number of reachable cells where the grid disagrees with the intuitive policy.
int intuitive_grid_mismatches(const BobGrid& grid);
// Does Alice, with no +1 ball left and Bob having just picked x, say x?
bool alice_repeats_when_done(const QTable& alice);


// Greedy pair acting from trained tables: Alice on seat 0, Bob on seat 1 with
// the prior term folded in when given.
class SaySelectTablePolicy final : public Policy {
 public:
  SaySelectTablePolicy(QTable alice, QTable bob, std::optional<SaySelectLogPrior> prior,
                       double lambda);
  Decision decide(const State& state, Rng& rng) override;
  std::string name() const override { return "say_select_tables"; }

 private:
  QTable alice_, bob_;
  std::optional<SaySelectLogPrior> prior_;
  double lambda_;
};

}  // namespace instructrl

#endif  // INSTRUCTRL_SAY_SELECT_TRAIN_H_
