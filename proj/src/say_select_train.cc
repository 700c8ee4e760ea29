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

#include "instructrl/say_select_train.h"

#include <algorithm>
#include <bit>
#include <cmath>

#include "instructrl/errors.h"

namespace instructrl {

namespace {

constexpr int kActions = SaySelectState::kNumActions;
constexpr std::array<uint8_t, kActions> kAliceLegal = {0, 1, 1, 1, 1, 1};
constexpr std::array<uint8_t, kActions> kBobLegal = {1, 1, 1, 1, 1, 1};

struct Pending {
  bool active = false;
  int key = 0;
  int action = 0;
  double reward = 0.0;
  double discount = 1.0;
};

int binomial(int n, int k) {
  int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

void SaySelectTrainConfig::validate() const {
  env.validate();
  if (env.env_id != EnvId::kSaySelect) throw ConfigError("say-select training needs a say_select env");
  if (epsilon < 0 || epsilon > 1) throw ConfigError("epsilon must lie in [0, 1]");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (batch_episodes < 1 || num_updates < 0 || eval_every < 1)
    throw ConfigError("batch_episodes and eval_every must be positive");
  if (!(beta >= 0)) throw ConfigError("beta must be >= 0");
  bob_lambda.validate();
}

void to_json(nlohmann::json& j, const SaySelectTrainConfig& c) {
  j = {{"env", c.env},
       {"epsilon", c.epsilon},
       {"lambda", c.bob_lambda},
       {"lr", c.lr},
       {"batch_episodes", c.batch_episodes},
       {"num_updates", c.num_updates},
       {"beta", c.beta},
       {"seed", c.seed},
       {"eval_every", c.eval_every},
       {"plateau_tolerance", c.plateau_tolerance}};
}

void from_json(const nlohmann::json& j, SaySelectTrainConfig& c) {
  SaySelectTrainConfig d;
  c.env = j.contains("env") ? j.at("env").get<EnvConfig>() : d.env;
  c.epsilon = j.value("epsilon", d.epsilon);
  c.bob_lambda = j.contains("lambda") ? j.at("lambda").get<LambdaSchedule>() : d.bob_lambda;
  c.lr = j.value("lr", d.lr);
  c.batch_episodes = j.value("batch_episodes", d.batch_episodes);
  c.num_updates = j.value("num_updates", d.num_updates);
  c.beta = j.value("beta", d.beta);
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.plateau_tolerance = j.value("plateau_tolerance", d.plateau_tolerance);
  c.validate();
}

int alice_greedy_action(const QTable& alice, int alice_key) {
  return regularized_argmax(alice.row(alice_key), {}, kAliceLegal, 0.0);
}

int bob_greedy_action(const QTable& bob, const SaySelectLogPrior* prior, double lambda,
                      int bob_key) {
  if (!prior) return regularized_argmax(bob.row(bob_key), {}, kBobLegal, 0.0);
  const int one_ago = bob_key % 6;
  return regularized_argmax(bob.row(bob_key), (*prior)[one_ago], kBobLegal, lambda);
}

SaySelectExactEval evaluate_say_select_exact(const QTable& alice, const QTable& bob,
                                             const SaySelectLogPrior* prior, double lambda,
                                             const EnvConfig& env) {
  SaySelectExactEval out;
  for (int mask = 1; mask < 32; ++mask) {
    std::array<int, 5> balls;
    int k = 0;
    for (int i = 0; i < 5; ++i) {
      balls[i] = mask >> i & 1 ? 1 : -1;
      k += mask >> i & 1;
    }
    SaySelectState s(env, balls);
    double ret = 0, discount = 1;
    while (!s.is_terminal()) {
      const int a = s.current_player() == SaySelectState::kAlice
                        ? alice_greedy_action(alice, s.alice_key())
                        : bob_greedy_action(bob, prior, lambda, s.bob_key());
      ret += discount * s.apply_action(a);
      discount *= env.gamma;
    }
    const double weight = (1.0 / 5.0) / binomial(5, k);
    out.return_by_mask[mask] = ret;
    out.expected_return += weight * ret;
    out.expected_score += weight * s.score();
  }
  return out;
}

double say_select_optimal_return(const EnvConfig& env) {
  // value[m][t]: best return with positive-ball mask m and t moves left, Alice to act.
  // A round is two moves; only Bob's pick pays, one move after the round starts.
  const double g = env.gamma;
  std::vector<std::array<double, 32>> value(env.max_steps + 1);
  for (int t = 0; t <= env.max_steps; ++t)
    for (int m = 0; m < 32; ++m) {
      double best = 0;  // quit (or run out of moves)
      if (t >= 2) {
        for (int b = 0; b < 5; ++b) {
          const bool positive = m >> b & 1;
          const double r = positive ? 1.0 : -1.0;
          const int next = positive ? m & ~(1 << b) : m;
          best = std::max(best, g * (r + g * value[t - 2][next]));
        }
      }
      value[t][m] = best;
    }
  double total = 0;
  for (int m = 1; m < 32; ++m) {
    const int k = std::popcount(static_cast<unsigned>(m));
    total += (1.0 / 5.0) / binomial(5, k) * value[env.max_steps][m];
  }
  return total;
}

BobGrid bob_policy_grid(const QTable& bob, const SaySelectLogPrior* prior, double lambda) {
  BobGrid grid{};
  for (int two = 0; two < 6; ++two)
    for (int one = 0; one < 6; ++one)
      grid[two][one] = bob_greedy_action(bob, prior, lambda, two * 6 + one);
  return grid;
}

bool is_reachable_bob_cell(int two_ago, int one_ago) {
  return one_ago >= 1 && one_ago <= 5 && two_ago >= 0 && two_ago <= 5;
}

int intuitive_bob_action(int two_ago, int one_ago) {
  return two_ago == one_ago ? SaySelectState::kQuit : one_ago;
}

int intuitive_grid_mismatches(const BobGrid& grid) {
  int n = 0;
  for (int two = 0; two < 6; ++two)
    for (int one = 0; one < 6; ++one)
      if (is_reachable_bob_cell(two, one) && grid[two][one] != intuitive_bob_action(two, one)) ++n;
  return n;
}

bool alice_repeats_when_done(const QTable& alice) {
  for (int x = 1; x <= 5; ++x) {
    const int key = SaySelectState::alice_key({{-1, -1, -1, -1, -1}, x});
    if (alice_greedy_action(alice, key) != x) return false;
  }
  return true;
}

SaySelectTrainResult train_say_select(const SaySelectTrainConfig& config,
                                      const PriorTable* bob_prior) {
  config.validate();
  std::optional<SaySelectLogPrior> log_prior;
  if (bob_prior) {
    if (bob_prior->env().env_id != EnvId::kSaySelect)
      throw ConfigError("say-select training needs a say_select prior table");
    log_prior = say_select_log_prior(*bob_prior, config.beta);
  }
  const double gamma = config.env.gamma;
  SaySelectTrainResult result;
  Rng policy_rng(derive_seed(config.seed, streams::kPolicy));
  Rng game_rng(derive_seed(config.seed, streams::kGame));
  std::vector<TabularTransition> alice_batch, bob_batch;

  for (int update = 0; update < config.num_updates; ++update) {
    const double lambda = anneal_lambda(config.bob_lambda, update);
    alice_batch.clear();
    bob_batch.clear();
    double batch_return = 0;
    for (int e = 0; e < config.batch_episodes; ++e) {
      SaySelectState s(config.env, game_rng.next_u64());
      std::array<Pending, 2> pending{};
      double discount = 1;
      auto finish = [&](int player, bool terminal, int next_key) {
        Pending& p = pending[player];
        if (!p.active) return;
        TabularTransition t;
        t.key = p.key;
        t.action = p.action;
        t.reward = p.reward;
        t.discount = terminal ? 0.0 : p.discount;
        t.terminal = terminal;
        if (!terminal) {
          t.next_key = next_key;
          const bool bob = player == SaySelectState::kBob;
          const auto& legal = bob ? kBobLegal : kAliceLegal;
          t.next_legal.assign(legal.begin(), legal.end());
          if (bob && log_prior) {
            const auto& row = (*log_prior)[next_key % 6];
            t.next_log_prior.assign(row.begin(), row.end());
          }
        }
        (player == SaySelectState::kBob ? bob_batch : alice_batch).push_back(std::move(t));
        p.active = false;
      };
      while (!s.is_terminal()) {
        const int player = s.current_player();
        const int key = s.acting_key();
        finish(player, false, key);
        int action;
        if (player == SaySelectState::kAlice) {
          action = epsilon_greedy_act(result.alice.row(key), kAliceLegal, config.epsilon,
                                      policy_rng);
        } else if (log_prior) {
          action = instructq_act(result.bob.row(key), (*log_prior)[key % 6], kBobLegal, lambda,
                                 config.epsilon, policy_rng);
        } else {
          action = epsilon_greedy_act(result.bob.row(key), kBobLegal, config.epsilon, policy_rng);
        }
        pending[player] = {true, key, action, 0.0, 1.0};
        const int r = s.apply_action(action);
        batch_return += discount * r;
        discount *= gamma;
        for (Pending& p : pending) {
          if (!p.active) continue;
          p.reward += p.discount * r;
          p.discount *= gamma;
        }
      }
      finish(SaySelectState::kAlice, true, 0);
      finish(SaySelectState::kBob, true, 0);
    }
    q_learning_update(result.alice, alice_batch, config.lr);
    if (log_prior) instructq_update(result.bob, bob_batch, lambda, config.lr);
    else q_learning_update(result.bob, bob_batch, config.lr);

    if ((update + 1) % config.eval_every == 0 || update + 1 == config.num_updates) {
      SaySelectCurvePoint point;
      point.update = update + 1;
      point.lambda = lambda;
      point.behavior_return = batch_return / config.batch_episodes;
      point.greedy_return =
          evaluate_say_select_exact(result.alice, result.bob, log_prior ? &*log_prior : nullptr,
                                    lambda, config.env)
              .expected_return;
      result.curve.push_back(point);
    }
  }
  result.final_lambda =
      anneal_lambda(config.bob_lambda, std::max(0, config.num_updates - 1));
  if (!result.curve.empty()) {
    const double last = result.curve.back().greedy_return;
    result.plateau_update = result.curve.back().update;
    for (int i = static_cast<int>(result.curve.size()) - 1; i >= 0; --i) {
      if (std::abs(result.curve[i].greedy_return - last) > config.plateau_tolerance) break;
      result.plateau_update = result.curve[i].update;
    }
  }
  return result;
}

SaySelectTablePolicy::SaySelectTablePolicy(QTable alice, QTable bob,
                                           std::optional<SaySelectLogPrior> prior, double lambda)
    : alice_(std::move(alice)), bob_(std::move(bob)), prior_(prior), lambda_(lambda) {
  if (alice_.num_keys() != SaySelectState::kNumAliceKeys ||
      bob_.num_keys() != SaySelectState::kNumBobKeys)
    throw ConfigError("Say-Select tables have the wrong shape");
}

Decision SaySelectTablePolicy::decide(const State& state, Rng&) {
  const auto* s = dynamic_cast<const SaySelectState*>(&state);
  if (!s) throw ContractViolation("SaySelectTablePolicy needs a Say-Select state");
  Decision d;
  if (s->current_player() == SaySelectState::kAlice) {
    d.action = alice_greedy_action(alice_, s->alice_key());
    return d;
  }
  const int key = s->bob_key();
  d.action = bob_greedy_action(bob_, prior_ ? &*prior_ : nullptr, lambda_, key);
  if (prior_) {
    // Bob's legal set is all six actions.
    for (double lp : (*prior_)[key % 6]) d.prior.push_back(std::exp(lp));
  }
  return d;
}

}  // namespace instructrl
