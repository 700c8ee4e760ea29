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

// Prior-regularized action selection and value updates shared by the
// learners, plus lambda schedules.

#ifndef INSTRUCTRL_LEARN_H_
#define INSTRUCTRL_LEARN_H_

#include <cstdint>
#include <span>
#include <vector>

#include "instructrl/rng.h"
#include "json.hpp"

namespace instructrl {

struct LambdaSchedule {
  enum class Kind { kConstant, kHalving, kLinear };
  Kind kind = Kind::kConstant;
  double initial = 0.0;
  int64_t period = 1;
  double delta = 0.0;  // linear only
  double floor = 0.0;  // linear only

  static LambdaSchedule constant(double lambda);
  // lambda0 * 0.5^floor(u / period)
  static LambdaSchedule halving(double lambda0, int64_t period);
  // max(floor, lambda0 - delta * floor(u / period))
  static LambdaSchedule linear(double lambda0, double delta, int64_t period, double floor);
  // Defaults rescaled to a run of `total_updates`: five annealing periods.
  static LambdaSchedule instructq_default(int64_t total_updates);
  static LambdaSchedule instructppo_default(int64_t total_updates);

  void validate() const;  // throws ConfigError
};

double anneal_lambda(const LambdaSchedule& schedule, int64_t update_index);

void to_json(nlohmann::json& j, const LambdaSchedule& s);
void from_json(const nlohmann::json& j, LambdaSchedule& s);

// argmax over legal a of q[a] + lambda * log_prior[a]; ties go to the lowest
// index. An empty log_prior means no prior term.
int regularized_argmax(std::span<const double> q, std::span<const double> log_prior,
                       std::span<const uint8_t> legal, double lambda);

// Epsilon-greedy on Q + lambda log p. Always draws u ~ U[0,1); if u < epsilon
// a second draw picks a legal action uniformly.
int instructq_act(std::span<const double> q, std::span<const double> log_prior,
                  std::span<const uint8_t> legal, double lambda, double epsilon, Rng& rng);
// The same without a prior.
int epsilon_greedy_act(std::span<const double> q, std::span<const uint8_t> legal,
                       double epsilon, Rng& rng);

class QTable {
 public:
  QTable() = default;
  QTable(int num_keys, int num_actions)
      : num_keys_(num_keys), num_actions_(num_actions),
        values_(static_cast<size_t>(num_keys) * num_actions, 0.0) {}

  int num_keys() const { return num_keys_; }
  int num_actions() const { return num_actions_; }
  double& at(int key, int action) { return values_[index(key, action)]; }
  double at(int key, int action) const { return values_[index(key, action)]; }
  std::span<const double> row(int key) const {
    return {values_.data() + index(key, 0), static_cast<size_t>(num_actions_)};
  }
  const std::vector<double>& values() const { return values_; }
  bool operator==(const QTable&) const = default;

 private:
  size_t index(int key, int action) const {
    return static_cast<size_t>(key) * num_actions_ + action;
  }
  int num_keys_ = 0;
  int num_actions_ = 0;
  std::vector<double> values_;
};

void to_json(nlohmann::json& j, const QTable& q);
void from_json(const nlohmann::json& j, QTable& q);

// One decision of one player, bootstrapping from that player's next decision.
// reward = sum_{u=t}^{t'-1} gamma^{u-t} r_u and discount = gamma^{t'-t}; for
// terminal transitions the target is the reward alone.
struct TabularTransition {
  int key = 0;
  int action = 0;
  double reward = 0.0;
  double discount = 0.0;
  bool terminal = true;
  int next_key = 0;
  std::vector<uint8_t> next_legal;
  std::vector<double> next_log_prior;  // prior snapshot at the next decision
};

// target = r + discount * Q(next, a'), a' = argmax Q(next) + lambda log p(next).
// TD errors of the batch are computed against the pre-update table and
// averaged per (key, action); each visited entry then moves lr times its
// mean error. Throws ContractViolation if a non-terminal transition lacks a
// prior snapshot.
void instructq_update(QTable& q, std::span<const TabularTransition> batch, double lambda,
                      double lr);
// Plain Q-learning with the same batching.
void q_learning_update(QTable& q, std::span<const TabularTransition> batch, double lr);

}  // namespace instructrl

#endif  // INSTRUCTRL_LEARN_H_
