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

#include "instructrl/ppo.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "instructrl/errors.h"

namespace instructrl {

void masked_log_softmax(std::span<const double> logits, std::span<const uint8_t> legal,
                        std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < logits.size(); ++a)
    if (legal[a]) mx = std::max(mx, logits[a]);
  if (!std::isfinite(mx)) throw NumericalError("log softmax: no finite legal logit");
  double sum = 0;
  for (size_t a = 0; a < logits.size(); ++a)
    if (legal[a]) sum += std::exp(logits[a] - mx);
  const double log_z = mx + std::log(sum);
  for (size_t a = 0; a < logits.size(); ++a)
    out[a] = legal[a] ? logits[a] - log_z : -std::numeric_limits<double>::infinity();
}

double kl_divergence(std::span<const double> log_pi, std::span<const double> log_p,
                     std::span<const uint8_t> legal) {
  double kl = 0;
  for (size_t a = 0; a < log_pi.size(); ++a) {
    if (!legal[a]) continue;
    const double pi = std::exp(log_pi[a]);
    if (pi == 0) continue;
    kl += pi * (log_pi[a] - log_p[a]);
  }
  return kl;
}

template <typename T>
PpoLossTerms ppo_loss(const RowMatrix<T>& outputs, const PpoBatch& batch,
                      const PpoLossConfig& config, RowMatrix<T>* grad_out) {
  const int A = batch.num_actions;
  const size_t n = batch.rows();
  if (n == 0) throw ContractViolation("ppo_loss: empty batch");
  if (outputs.rows() != static_cast<long>(n) || outputs.cols() != A + 1 ||
      batch.legal.size() != n * A || batch.behavior_logp.size() != n ||
      batch.advantages.size() != n || batch.returns.size() != n)
    throw ContractViolation("ppo_loss: batch shape mismatch");
  const bool use_kl = config.lambda != 0.0;
  if (use_kl && batch.log_prior.size() != n * A)
    throw ContractViolation("ppo_loss: KL term needs a prior snapshot per row");
  if (grad_out) grad_out->setZero(n, A + 1);

  PpoLossTerms terms;
  std::vector<double> logits(A), log_pi(A), pi(A);
  const double inv_n = 1.0 / n;
  for (size_t i = 0; i < n; ++i) {
    const std::span<const uint8_t> legal(batch.legal.data() + i * A, A);
    for (int a = 0; a < A; ++a) logits[a] = static_cast<double>(outputs(i, a));
    masked_log_softmax(logits, legal, log_pi);
    for (int a = 0; a < A; ++a) pi[a] = legal[a] ? std::exp(log_pi[a]) : 0.0;
    const int act = batch.actions[i];
    if (act < 0 || act >= A || !legal[act]) throw ContractViolation("ppo_loss: illegal action");

    const double adv = batch.advantages[i];
    const double rho = std::exp(log_pi[act] - batch.behavior_logp[i]);
    const double clipped = std::clamp(rho, 1.0 - config.clip, 1.0 + config.clip);
    const double surrogate = std::min(rho * adv, clipped * adv);
    // The unclipped branch carries the gradient unless the ratio has moved
    // past the clip boundary in the direction the advantage favors.
    const bool active = adv >= 0 ? rho < 1.0 + config.clip : rho > 1.0 - config.clip;
    if (!active) terms.clip_fraction += inv_n;

    double kl = 0, entropy = 0;
    if (use_kl)
      kl = kl_divergence(log_pi, std::span<const double>(batch.log_prior.data() + i * A, A),
                         legal);
    for (int a = 0; a < A; ++a)
      if (legal[a] && pi[a] > 0) entropy -= pi[a] * log_pi[a];
    const double v = static_cast<double>(outputs(i, A));
    const double verr = v - batch.returns[i];

    terms.surrogate += surrogate * inv_n;
    terms.kl += kl * inv_n;
    terms.entropy += entropy * inv_n;
    terms.value += 0.5 * verr * verr * inv_n;

    if (grad_out) {
      for (int a = 0; a < A; ++a) {
        if (!legal[a]) continue;
        double g = 0;
        if (active) g -= adv * rho * ((a == act ? 1.0 : 0.0) - pi[a]);
        if (use_kl)
          g += config.lambda * pi[a] * (log_pi[a] - batch.log_prior[i * A + a] - kl);
        if (config.entropy_coef != 0.0) g += config.entropy_coef * pi[a] * (log_pi[a] + entropy);
        (*grad_out)(i, a) = static_cast<T>(g * inv_n);
      }
      (*grad_out)(i, A) = static_cast<T>(config.value_coef * verr * inv_n);
    }
  }
  terms.total = -terms.surrogate + config.lambda * terms.kl - config.entropy_coef * terms.entropy +
                config.value_coef * terms.value;
  if (!std::isfinite(terms.total)) throw NumericalError("ppo_loss: non-finite loss");
  return terms;
}

template PpoLossTerms ppo_loss<float>(const RowMatrix<float>&, const PpoBatch&,
                                      const PpoLossConfig&, RowMatrix<float>*);
template PpoLossTerms ppo_loss<double>(const RowMatrix<double>&, const PpoBatch&,
                                       const PpoLossConfig&, RowMatrix<double>*);

}  // namespace instructrl
