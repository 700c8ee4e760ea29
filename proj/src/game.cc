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

#include "instructrl/game.h"

#include <algorithm>
#include <cmath>

#include "instructrl/errors.h"
#include "instructrl/hanabi.h"
#include "instructrl/say_select.h"

namespace instructrl {

std::vector<int> State::legal_actions(PlayerId player) const {
  if (is_terminal() || player.index != current_player())
    throw ContractViolation("legal_actions queried for player " + std::to_string(player.index) +
                            " who is not acting");
  return legal_actions();
}

bool State::is_legal(int action) const {
  const auto legal = legal_actions();
  return std::binary_search(legal.begin(), legal.end(), action);
}

std::unique_ptr<State> new_initial_state(const EnvConfig& config, uint64_t seed) {
  config.validate();
  if (config.env_id == EnvId::kHanabi) return std::make_unique<HanabiState>(config, seed);
  return std::make_unique<SaySelectState>(config, seed);
}

namespace {

std::vector<std::string> all_observations(const State& s) {
  std::vector<std::string> obs;
  for (int p = 0; p < kNumPlayers; ++p) obs.push_back(s.observation_string(p));
  return obs;
}

}  // namespace

ResetResult reset(const EnvConfig& config, uint64_t seed) {
  ResetResult r;
  r.state = new_initial_state(config, seed);
  r.observations = all_observations(*r.state);
  return r;
}

StepResult step(State& state, int action) {
  StepResult r;
  r.reward = state.apply_action(action);
  r.done = state.is_terminal();
  r.observations = all_observations(state);
  return r;
}

Decision UniformRandomPolicy::decide(const State& state, Rng& rng) {
  const auto legal = state.legal_actions();
  return {legal[rng.uniform_int(static_cast<int>(legal.size()))], {}};
}

double EpisodeTrace::recompute_return() const {
  double total = 0.0, discount = 1.0;
  for (const TraceStep& s : steps) {
    total += discount * s.reward;
    discount *= config.gamma;
  }
  return total;
}

EpisodeTrace run_episode(const EnvConfig& config, std::span<Policy* const> policies,
                         uint64_t seed) {
  if (policies.size() != kNumPlayers)
    throw ContractViolation("run_episode: need exactly one policy per player");
  EpisodeTrace trace;
  trace.seed = seed;
  trace.config = config;
  auto state = new_initial_state(config, seed);
  Rng rng(derive_seed(seed, streams::kPolicy));
  double discount = 1.0;
  while (!state->is_terminal()) {
    const int player = state->current_player();
    TraceStep step;
    step.player = player;
    step.observation = state->observation_string(player);
    Decision d = policies[player]->decide(*state, rng);
    step.action = d.action;
    step.prior = std::move(d.prior);
    if (!state->is_legal(d.action)) {
      trace.error = "policy '" + policies[player]->name() + "' returned illegal action " +
                    std::to_string(d.action) + " at move " +
                    std::to_string(state->move_number());
      trace.steps.push_back(std::move(step));
      return trace;
    }
    step.action_text = state->action_to_string(d.action);
    step.reward = state->apply_action(d.action);
    trace.total_return += discount * step.reward;
    trace.score += step.reward;
    discount *= config.gamma;
    trace.steps.push_back(std::move(step));
  }
  trace.terminal = true;
  return trace;
}

std::unique_ptr<State> replay_trace(const EpisodeTrace& trace) {
  auto state = new_initial_state(trace.config, trace.seed);
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const TraceStep& s = trace.steps[t];
    if (state->is_terminal()) throw ContractViolation("replay: trace continues past terminal");
    if (state->current_player() != s.player ||
        state->observation_string(s.player) != s.observation)
      throw ContractViolation("replay: observation mismatch at step " + std::to_string(t));
    if (trace.error && t + 1 == trace.steps.size()) break;
    if (state->apply_action(s.action) != s.reward)
      throw ContractViolation("replay: reward mismatch at step " + std::to_string(t));
  }
  return state;
}

void to_json(nlohmann::json& j, const EpisodeTrace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const TraceStep& s : t.steps) {
    nlohmann::json js = {{"player", s.player},
                         {"observation", s.observation},
                         {"action", s.action},
                         {"action_text", s.action_text},
                         {"reward", s.reward}};
    if (!s.prior.empty()) js["prior"] = s.prior;
    steps.push_back(std::move(js));
  }
  j = {{"format", "instructrl.trace"},
       {"version", kTraceFormatVersion},
       {"seed", t.seed},
       {"env", t.config},
       {"steps", steps},
       {"terminal", t.terminal},
       {"total_return", t.total_return},
       {"score", t.score}};
  if (t.error) j["error"] = *t.error;
}

void from_json(const nlohmann::json& j, EpisodeTrace& t) {
  if (j.value("format", "") != "instructrl.trace")
    throw ConfigError("not an instructrl trace document");
  if (j.at("version").get<int>() != kTraceFormatVersion)
    throw ConfigError("unsupported trace version");
  t.seed = j.at("seed").get<uint64_t>();
  t.config = j.at("env").get<EnvConfig>();
  t.steps.clear();
  for (const auto& js : j.at("steps")) {
    TraceStep s;
    s.player = js.at("player");
    s.observation = js.at("observation");
    s.action = js.at("action");
    s.action_text = js.value("action_text", "");
    s.reward = js.at("reward");
    if (js.contains("prior")) s.prior = js.at("prior").get<std::vector<double>>();
    t.steps.push_back(std::move(s));
  }
  t.terminal = j.at("terminal");
  t.total_return = j.at("total_return");
  t.score = j.at("score");
  if (j.contains("error")) t.error = j.at("error").get<std::string>();
  else t.error.reset();
}

}  // namespace instructrl
