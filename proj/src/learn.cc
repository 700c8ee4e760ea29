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

#include "instructrl/learn.h"

#include <cmath>
#include <limits>

#include "instructrl/errors.h"

namespace instructrl {

LambdaSchedule LambdaSchedule::constant(double lambda) {
  LambdaSchedule s;
  s.initial = lambda;
  return s;
}

LambdaSchedule LambdaSchedule::halving(double lambda0, int64_t period) {
  LambdaSchedule s;
  s.kind = Kind::kHalving;
  s.initial = lambda0;
  s.period = period;
  return s;
}

LambdaSchedule LambdaSchedule::linear(double lambda0, double delta, int64_t period,
                                      double floor) {
  LambdaSchedule s;
  s.kind = Kind::kLinear;
  s.initial = lambda0;
  s.delta = delta;
  s.period = period;
  s.floor = floor;
  return s;
}

LambdaSchedule LambdaSchedule::instructq_default(int64_t total_updates) {
  return halving(0.15, std::max<int64_t>(1, total_updates / 5));
}

LambdaSchedule LambdaSchedule::instructppo_default(int64_t total_updates) {
  return linear(0.05, 0.008, std::max<int64_t>(1, total_updates / 5), 0.01);
}

void LambdaSchedule::validate() const {
  if (!(initial >= 0) || !std::isfinite(initial)) throw ConfigError("lambda must be >= 0");
  if (period < 1) throw ConfigError("lambda schedule period must be >= 1");
  if (kind == Kind::kLinear && (delta < 0 || floor < 0))
    throw ConfigError("linear lambda schedule needs delta >= 0 and floor >= 0");
}

double anneal_lambda(const LambdaSchedule& s, int64_t update_index) {
  if (update_index < 0) throw ContractViolation("anneal_lambda: negative update index");
  const int64_t steps = update_index / s.period;
  switch (s.kind) {
    case LambdaSchedule::Kind::kConstant: return s.initial;
    case LambdaSchedule::Kind::kHalving: return std::ldexp(s.initial, -static_cast<int>(std::min<int64_t>(steps, 2000)));
    case LambdaSchedule::Kind::kLinear:
      return std::max(s.floor, s.initial - s.delta * static_cast<double>(steps));
  }
  return s.initial;
}

void to_json(nlohmann::json& j, const LambdaSchedule& s) {
  switch (s.kind) {
    case LambdaSchedule::Kind::kConstant: j = {{"kind", "constant"}, {"initial", s.initial}}; break;
    case LambdaSchedule::Kind::kHalving:
      j = {{"kind", "halving"}, {"initial", s.initial}, {"period", s.period}};
      break;
    case LambdaSchedule::Kind::kLinear:
      j = {{"kind", "linear"}, {"initial", s.initial}, {"period", s.period},
           {"delta", s.delta},  {"floor", s.floor}};
      break;
  }
}

void from_json(const nlohmann::json& j, LambdaSchedule& s) {
  if (j.is_number()) {
    s = LambdaSchedule::constant(j.get<double>());
    return;
  }
  for (const auto& [k, v] : j.items())
    if (k != "kind" && k != "initial" && k != "period" && k != "delta" && k != "floor")
      throw ConfigError("unknown lambda schedule field '" + k + "'");
  const std::string kind = j.value("kind", "constant");
  s = LambdaSchedule{};
  if (kind == "constant") s.kind = LambdaSchedule::Kind::kConstant;
  else if (kind == "halving") s.kind = LambdaSchedule::Kind::kHalving;
  else if (kind == "linear") s.kind = LambdaSchedule::Kind::kLinear;
  else throw ConfigError("unknown lambda schedule '" + kind + "'");
  s.initial = j.value("initial", 0.0);
  s.period = j.value("period", int64_t{1});
  s.delta = j.value("delta", 0.0);
  s.floor = j.value("floor", 0.0);
  s.validate();
}

int regularized_argmax(std::span<const double> q, std::span<const double> log_prior,
                       std::span<const uint8_t> legal, double lambda) {
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < q.size(); ++a) {
    if (!legal[a]) continue;
    const double score = log_prior.empty() ? q[a] : q[a] + lambda * log_prior[a];
    if (best < 0 || score > best_score) {
      best = static_cast<int>(a);
      best_score = score;
    }
  }
  if (best < 0) throw ContractViolation("no legal action to choose from");
  return best;
}

namespace {

int uniform_legal(std::span<const uint8_t> legal, Rng& rng) {
  int count = 0;
  for (uint8_t l : legal) count += l != 0;
  if (count == 0) throw ContractViolation("no legal action to choose from");
  int pick = rng.uniform_int(count);
  for (size_t a = 0; a < legal.size(); ++a)
    if (legal[a] && pick-- == 0) return static_cast<int>(a);
  return -1;
}

void check_shapes(const QTable& q, const TabularTransition& t) {
  if (t.key < 0 || t.key >= q.num_keys() || t.action < 0 || t.action >= q.num_actions())
    throw ContractViolation("tabular update: transition outside the table");
  if (!t.terminal) {
    if (t.next_key < 0 || t.next_key >= q.num_keys() ||
        t.next_legal.size() != static_cast<size_t>(q.num_actions()))
      throw ContractViolation("tabular update: malformed next state");
  }
}

template <typename TargetFn>
void batched_update(QTable& q, std::span<const TabularTransition> batch, double lr,
                    TargetFn target) {
  std::vector<double> sum(q.values().size(), 0.0);
  std::vector<int> count(q.values().size(), 0);
  for (const TabularTransition& t : batch) {
    check_shapes(q, t);
    const size_t i = static_cast<size_t>(t.key) * q.num_actions() + t.action;
    sum[i] += target(t) - q.at(t.key, t.action);
    ++count[i];
  }
  for (int k = 0; k < q.num_keys(); ++k)
    for (int a = 0; a < q.num_actions(); ++a) {
      const size_t i = static_cast<size_t>(k) * q.num_actions() + a;
      if (count[i] > 0) q.at(k, a) += lr * (sum[i] / count[i]);
    }
}

}  // namespace

int instructq_act(std::span<const double> q, std::span<const double> log_prior,
                  std::span<const uint8_t> legal, double lambda, double epsilon, Rng& rng) {
  if (rng.uniform01() < epsilon) return uniform_legal(legal, rng);
  return regularized_argmax(q, log_prior, legal, lambda);
}

int epsilon_greedy_act(std::span<const double> q, std::span<const uint8_t> legal,
                       double epsilon, Rng& rng) {
  if (rng.uniform01() < epsilon) return uniform_legal(legal, rng);
  return regularized_argmax(q, {}, legal, 0.0);
}

void instructq_update(QTable& q, std::span<const TabularTransition> batch, double lambda,
                      double lr) {
  for (const TabularTransition& t : batch)
    if (!t.terminal && t.next_log_prior.size() != static_cast<size_t>(q.num_actions()))
      throw ContractViolation("instructq_update: transition has no prior snapshot");
  batched_update(q, batch, lr, [&](const TabularTransition& t) {
    if (t.terminal) return t.reward;
    const int a = regularized_argmax(q.row(t.next_key), t.next_log_prior, t.next_legal, lambda);
    return t.reward + t.discount * q.at(t.next_key, a);
  });
}

void q_learning_update(QTable& q, std::span<const TabularTransition> batch, double lr) {
  batched_update(q, batch, lr, [&](const TabularTransition& t) {
    if (t.terminal) return t.reward;
    const int a = regularized_argmax(q.row(t.next_key), {}, t.next_legal, 0.0);
    return t.reward + t.discount * q.at(t.next_key, a);
  });
}

void to_json(nlohmann::json& j, const QTable& q) {
  j = {{"num_keys", q.num_keys()}, {"num_actions", q.num_actions()}, {"values", q.values()}};
}

void from_json(const nlohmann::json& j, QTable& q) {
  q = QTable(j.at("num_keys").get<int>(), j.at("num_actions").get<int>());
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != q.values().size()) throw ConfigError("q table: value count mismatch");
  for (int k = 0; k < q.num_keys(); ++k)
    for (int a = 0; a < q.num_actions(); ++a)
      q.at(k, a) = values[static_cast<size_t>(k) * q.num_actions() + a];
}

}  // namespace instructrl
