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

#include "instructrl/say_select.h"

#include <numeric>

#include "instructrl/errors.h"

namespace instructrl {

SaySelectState::SaySelectState(const EnvConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, streams::kEnvironment));
  const int min_k = config_.say_select.allow_zero_positive ? 0 : 1;
  const int k = min_k + rng.uniform_int(kNumBalls - min_k + 1);
  std::array<int, kNumBalls> order;
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.uniform_int(kNumBalls - i);
    std::swap(order[i], order[j]);
  }
  balls_.fill(-1);
  for (int i = 0; i < k; ++i) balls_[order[i]] = +1;
}

SaySelectState::SaySelectState(const EnvConfig& config,
                               const std::array<int, kNumBalls>& ball_rewards)
    : config_(config), balls_(ball_rewards) {
  config_.validate();
  for (int b : balls_)
    if (b != 1 && b != -1) throw ContractViolation("say_select: ball values must be +1 or -1");
}

int SaySelectState::current_player() const {
  return phase_ == Phase::kAliceToAct ? kAlice : kBob;
}

int SaySelectState::num_positive() const {
  int k = 0;
  for (int b : balls_) k += b > 0;
  return k;
}

std::vector<int> SaySelectState::legal_actions() const {
  if (done_) return {};
  if (phase_ == Phase::kAliceToAct) return {1, 2, 3, 4, 5};
  return {0, 1, 2, 3, 4, 5};
}

int SaySelectState::apply_action(int action) {
  if (done_) throw ContractViolation("say_select: game is over");
  int reward = 0;
  if (phase_ == Phase::kAliceToAct) {
    if (action < 1 || action > kNumBalls)
      throw ContractViolation("say_select: Alice must say a number in 1..5, got " +
                              std::to_string(action));
    alice_history_[0] = alice_history_[1];
    alice_history_[1] = action;
    phase_ = Phase::kBobToAct;
  } else {
    if (action < 0 || action > kNumBalls)
      throw ContractViolation("say_select: ball index out of range: " + std::to_string(action));
    last_bob_ = action;
    if (action == kQuit) {
      quit_ = true;
      done_ = true;
    } else {
      reward = balls_[action - 1];
      balls_[action - 1] = -1;
    }
    phase_ = Phase::kAliceToAct;
  }
  score_ += reward;
  ++moves_;
  if (moves_ >= config_.max_steps) done_ = true;
  return reward;
}

std::string SaySelectState::observation_string(int player) const {
  if (player == kAlice) {
    std::string s = "balls=";
    for (int b : balls_) s += b > 0 ? '+' : '-';
    s += ";bob=";
    s += last_bob_ == kNoBobAction ? "none"
         : last_bob_ == kQuit      ? "quit"
                                   : "pick" + std::to_string(last_bob_);
    return s;
  }
  if (player == kBob) {
    auto u = [](int x) { return x == kNoUtterance ? std::string("none") : std::to_string(x); };
    return "alice=" + u(alice_history_[0]) + "," + u(alice_history_[1]);
  }
  throw ContractViolation("say_select: bad player index");
}

std::string SaySelectState::action_to_string(int action) const {
  if (action == kQuit) return "quit";
  if (phase_ == Phase::kAliceToAct) return "say " + std::to_string(action);
  return "pick " + std::to_string(action);
}

int SaySelectState::alice_key(const AliceObservation& obs) {
  int mask = 0;
  for (int i = 0; i < kNumBalls; ++i)
    if (obs.ball_rewards[i] > 0) mask |= 1 << i;
  return mask * 7 + (obs.last_bob_action + 1);
}

int SaySelectState::bob_key(const BobObservation& obs) {
  return obs.two_ago * 6 + obs.one_ago;
}

int SaySelectState::acting_key() const {
  return phase_ == Phase::kAliceToAct ? alice_key() : bob_key();
}

nlohmann::json SaySelectState::to_json() const {
  return {{"env", "say_select"},
          {"ball_rewards", balls_},
          {"alice_history", alice_history_},
          {"last_bob_action", last_bob_},
          {"phase", phase_ == Phase::kAliceToAct ? "alice_to_act" : "bob_to_act"},
          {"move_number", moves_},
          {"score", score_},
          {"done", done_}};
}

std::unique_ptr<State> SaySelectState::clone() const {
  return std::make_unique<SaySelectState>(*this);
}

}  // namespace instructrl
