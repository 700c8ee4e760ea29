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

// Say-Select: five balls, each worth +1 or -1. Alice sees the values and says
// a number 1..5; blindfolded Bob sees only Alice's last two utterances and
// either picks a ball (collecting its value, after which the ball is worth -1)
// or quits. Alice and Bob alternate, Alice first.

#ifndef INSTRUCTRL_SAY_SELECT_H_
#define INSTRUCTRL_SAY_SELECT_H_

#include <array>
#include <cstdint>

#include "instructrl/game.h"

namespace instructrl {

class SaySelectState final : public State {
 public:
  static constexpr int kNumBalls = SaySelectConfig::kNumBalls;
  // Action ids: 0 = quit (Bob only), k in 1..5 = say k (Alice) / pick ball k (Bob).
  static constexpr int kNumActions = kNumBalls + 1;
  static constexpr int kQuit = 0;
  static constexpr int kAlice = 0;
  static constexpr int kBob = 1;
  // Utterance sentinel before Alice has spoken.
  static constexpr int kNoUtterance = 0;
  // last_bob_action() sentinel before Bob has moved.
  static constexpr int kNoBobAction = -1;
  static constexpr int kNumAliceKeys = (1 << kNumBalls) * 7;  // 224
  static constexpr int kNumBobKeys = 6 * 6;                  // 36

  enum class Phase { kAliceToAct, kBobToAct };

  struct AliceObservation {
    std::array<int, kNumBalls> ball_rewards;
    int last_bob_action;  // kNoBobAction, kQuit or 1..5
  };
  struct BobObservation {
    int two_ago;  // kNoUtterance or 1..5
    int one_ago;
  };

  // Draws k, the number of +1 balls, uniformly from {1..5} (or {0..5}), then
  // k distinct positions by a partial Fisher-Yates shuffle, in that order,
  // from the environment stream of `seed`.
  SaySelectState(const EnvConfig& config, uint64_t seed);
  // Fixed assignment; ball_rewards[i] in {+1, -1}.
  SaySelectState(const EnvConfig& config, const std::array<int, kNumBalls>& ball_rewards);

  EnvId env_id() const override { return EnvId::kSaySelect; }
  const EnvConfig& config() const override { return config_; }
  int num_distinct_actions() const override { return kNumActions; }
  int current_player() const override;
  bool is_terminal() const override { return done_; }
  int move_number() const override { return moves_; }
  int score() const override { return score_; }
  using State::legal_actions;
  std::vector<int> legal_actions() const override;
  int apply_action(int action) override;
  std::string observation_string(int player) const override;
  std::string action_to_string(int action) const override;
  nlohmann::json to_json() const override;
  std::unique_ptr<State> clone() const override;

  Phase phase() const { return phase_; }
  const std::array<int, kNumBalls>& ball_rewards() const { return balls_; }
  int num_positive() const;
  int alice_two_ago() const { return alice_history_[0]; }
  int alice_one_ago() const { return alice_history_[1]; }
  int last_bob_action() const { return last_bob_; }
  bool quit() const { return quit_; }

  AliceObservation alice_observation() const { return {balls_, last_bob_}; }
  BobObservation bob_observation() const { return {alice_history_[0], alice_history_[1]}; }

  // Dense observation indices for tabular learners.
  static int alice_key(const AliceObservation& obs);
  static int bob_key(const BobObservation& obs);
  int alice_key() const { return alice_key(alice_observation()); }
  int bob_key() const { return bob_key(bob_observation()); }
  // Index of `key` for the acting player.
  int acting_key() const;

 private:
  EnvConfig config_;
  std::array<int, kNumBalls> balls_{};
  std::array<int, 2> alice_history_{kNoUtterance, kNoUtterance};
  int last_bob_ = kNoBobAction;
  Phase phase_ = Phase::kAliceToAct;
  int moves_ = 0;
  int score_ = 0;
  bool done_ = false;
  bool quit_ = false;
};

}  // namespace instructrl

#endif  // INSTRUCTRL_SAY_SELECT_H_
