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

// Clipped PPO objective with a KL penalty toward the language prior, and its
// gradient with respect to the network outputs.

#ifndef INSTRUCTRL_PPO_H_
#define INSTRUCTRL_PPO_H_

#include <cstdint>
#include <span>
#include <vector>

#include "instructrl/nn.h"

namespace instructrl {

// log softmax over legal entries; illegal entries get -inf.
void masked_log_softmax(std::span<const double> logits, std::span<const uint8_t> legal,
                        std::span<double> out);
// KL(pi || p) over legal actions from log-probabilities. Terms with pi = 0
// contribute 0.
double kl_divergence(std::span<const double> log_pi, std::span<const double> log_p,
                     std::span<const uint8_t> legal);

struct PpoLossConfig {
  double clip = 0.2;
  double lambda = 0.0;  // weight of KL(pi || prior)
  double value_coef = 0.5;
  double entropy_coef = 0.0;
};

// One row per decision. Network outputs are num_actions policy logits
// followed by one value column.
struct PpoBatch {
  int num_actions = 0;
  std::vector<uint8_t> legal;         // rows x num_actions
  std::vector<double> log_prior;      // rows x num_actions; may be empty when lambda = 0
  std::vector<int> actions;
  std::vector<double> behavior_logp;  // log mu(a | s) at collection time
  std::vector<double> advantages;
  std::vector<double> returns;        // value targets
  size_t rows() const { return actions.size(); }
};

struct PpoLossTerms {
  double total = 0;
  double surrogate = 0;  // mean of min(rho A, clip(rho) A)
  double kl = 0;         // mean KL(pi || prior)
  double entropy = 0;
  double value = 0;      // mean 0.5 (V - R)^2
  double clip_fraction = 0;
};

// loss = -surrogate + lambda kl - entropy_coef entropy + value_coef value,
// averaged over rows. When grad_out is given it receives d(loss)/d(outputs).
// Throws NumericalError on non-finite values.
template <typename T>
PpoLossTerms ppo_loss(const RowMatrix<T>& outputs, const PpoBatch& batch,
                      const PpoLossConfig& config, RowMatrix<T>* grad_out);

}  // namespace instructrl

#endif  // INSTRUCTRL_PPO_H_
