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

// Turn-based two-player environment contract shared by Say-Select and Hanabi,
// plus the seeded episode runner and its replayable trace.

#ifndef INSTRUCTRL_GAME_H_
#define INSTRUCTRL_GAME_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instructrl/config.h"
#include "instructrl/rng.h"
#include "json.hpp"

namespace instructrl {

inline constexpr int kNumPlayers = 2;

// Seat index in [0, kNumPlayers).
struct PlayerId {
  int index = 0;
  constexpr explicit PlayerId(int i = 0) : index(i) {}
  constexpr bool operator==(const PlayerId&) const = default;
};

// One environment instance. Actions are dense integer ids in
// [0, num_distinct_actions()); only the acting player may move. Rewards are
// integers, shared by both players.
class State {
 public:
  virtual ~State() = default;

  virtual EnvId env_id() const = 0;
  virtual const EnvConfig& config() const = 0;
  virtual int num_distinct_actions() const = 0;
  virtual int current_player() const = 0;
  virtual bool is_terminal() const = 0;
  // Number of moves applied so far.
  virtual int move_number() const = 0;
  // Sum of rewards emitted so far.
  virtual int score() const = 0;

  // Legal actions of the acting player, ascending. Empty iff terminal.
  virtual std::vector<int> legal_actions() const = 0;
  // Throws ContractViolation unless `player` is the acting player.
  std::vector<int> legal_actions(PlayerId player) const;
  bool is_legal(int action) const;

  // Applies the acting player's move and returns the reward. Throws
  // ContractViolation on an illegal action or a terminal state.
  virtual int apply_action(int action) = 0;

  // Canonical text of what `player` observes; equal strings mean equal
  // observations. Used by traces and replay checks.
  virtual std::string observation_string(int player) const = 0;
  virtual std::string action_to_string(int action) const = 0;

  virtual nlohmann::json to_json() const = 0;
  virtual std::unique_ptr<State> clone() const = 0;
};

// Initial state sampled deterministically from `seed`. Throws ConfigError.
std::unique_ptr<State> new_initial_state(const EnvConfig& config, uint64_t seed);

struct ResetResult {
  std::unique_ptr<State> state;
  std::vector<std::string> observations;  // per player
};
ResetResult reset(const EnvConfig& config, uint64_t seed);

struct StepResult {
  int reward = 0;
  bool done = false;
  std::vector<std::string> observations;  // per player
};
StepResult step(State& state, int action);

// What a policy returns for one decision. `prior` is the prior distribution
// over state.legal_actions() (same order) when the policy used one.
struct Decision {
  int action = -1;
  std::vector<double> prior;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Decision decide(const State& state, Rng& rng) = 0;
  virtual std::string name() const = 0;
};

// Picks a uniformly random legal action.
class UniformRandomPolicy final : public Policy {
 public:
  Decision decide(const State& state, Rng& rng) override;
  std::string name() const override { return "uniform_random"; }
};

struct TraceStep {
  int player = 0;
  std::string observation;  // observation_string(player) before acting
  int action = -1;
  std::string action_text;
  int reward = 0;
  std::vector<double> prior;
};

inline constexpr int kTraceFormatVersion = 1;

struct EpisodeTrace {
  uint64_t seed = 0;
  EnvConfig config;
  std::vector<TraceStep> steps;
  bool terminal = false;
  double total_return = 0.0;  // sum_t gamma^t r_t
  int score = 0;              // undiscounted sum of rewards
  std::optional<std::string> error;

  double recompute_return() const;
};

void to_json(nlohmann::json& j, const EpisodeTrace& t);
void from_json(const nlohmann::json& j, EpisodeTrace& t);

// Plays one game. policies[i] controls seat i. Policy randomness comes from a
// stream derived from `seed`. A policy returning an illegal action aborts the
// episode: the trace is returned with `error` set and terminal = false.
EpisodeTrace run_episode(const EnvConfig& config, std::span<Policy* const> policies,
                         uint64_t seed);

// Re-applies the trace's actions from its seed, checking every observation
// and reward. Returns the final state; throws ContractViolation on mismatch.
std::unique_ptr<State> replay_trace(const EpisodeTrace& trace);

}  // namespace instructrl

#endif  // INSTRUCTRL_GAME_H_
