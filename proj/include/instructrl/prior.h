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

// Prior tables: cached (observation text, action text) -> logit maps, the
// softmax prior over legal actions, enumeration of the text domain,
// corruption and accuracy audits.

#ifndef INSTRUCTRL_PRIOR_H_
#define INSTRUCTRL_PRIOR_H_

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "instructrl/backend.h"
#include "instructrl/config.h"
#include "instructrl/hanabi.h"
#include "instructrl/lang.h"
#include "json.hpp"

namespace instructrl {

inline constexpr int kPriorFormatVersion = 1;

struct PriorEntry {
  std::string obs;
  std::string act;
  double logit = 0.0;
  nlohmann::json raw;  // backend response, kept for audit; may be null
};

struct PriorProvenance {
  std::string kind = "oracle";  // oracle, scripted, llm_api or corrupted
  std::string base_kind;        // kind of the table a corrupted table came from
  double noise_ratio = 0.0;
  uint64_t noise_seed = 0;
};

class PriorTable {
 public:
  PriorTable() = default;
  PriorTable(EnvConfig env, Instruction instruction, std::string backend, double beta);

  const EnvConfig& env() const { return env_; }
  const Instruction& instruction() const { return instruction_; }
  const std::string& backend() const { return backend_; }
  double beta() const { return beta_; }
  void set_beta(double beta);
  const PriorProvenance& provenance() const { return provenance_; }
  void set_provenance(PriorProvenance p) { provenance_ = std::move(p); }

  // Adds or overwrites one entry.
  void set(const std::string& obs, const std::string& act, double logit,
           nlohmann::json raw = nullptr);
  bool contains(const std::string& obs, const std::string& act) const;
  const PriorEntry* find(const std::string& obs, const std::string& act) const;
  // Throws ContractViolation when the pair is missing.
  double logit(const std::string& obs, const std::string& act) const;
  const std::vector<PriorEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool is_binary() const;
  // Every enumerated pair of the environment is present.
  bool is_complete() const;

  nlohmann::json to_json() const;
  static PriorTable from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static PriorTable load(const std::filesystem::path& path);

 private:
  static std::string key(const std::string& obs, const std::string& act) {
    return obs + '\n' + act;
  }

  EnvConfig env_;
  Instruction instruction_;
  std::string backend_;
  double beta_ = 1.0;
  PriorProvenance provenance_;
  std::vector<PriorEntry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Text domain. Hanabi observations: null, play per position, discard per
// position, rank hints (rank-major, then touched set as a bitmask), color
// hints. Actions: play per position, discard per position, hint color, hint
// rank. Say-Select: observations "1".."5", actions "0".."5".
std::vector<std::string> hanabi_observation_texts(const HanabiConfig& config);
std::vector<std::string> hanabi_action_texts(const HanabiConfig& config);
std::vector<std::pair<std::string, std::string>> enumerate_pairs(const EnvConfig& config);

struct PriorBuildOptions {
  // Entries present in this file are reused; progress is written back to it.
  std::optional<std::filesystem::path> cache_path;
  int save_every = 200;  // backend queries between partial saves
  std::function<void(size_t done, size_t total)> progress;
};

struct PriorBuildStats {
  size_t from_cache = 0;
  size_t queried = 0;
};

// Scores every enumerated pair. On RetryableBackendError the partial table is
// saved to the cache (when configured) and the error is rethrown; a later call
// resumes from it.
PriorTable build_prior_table(const EnvConfig& env, const Instruction& instruction,
                             LanguageBackend& backend, double beta,
                             const PriorBuildOptions& options = {},
                             PriorBuildStats* stats = nullptr);

// Softmax(beta * logit) restricted to the given legal action texts, in order.
std::vector<double> prior_distribution(const PriorTable& table, const std::string& obs,
                                       std::span<const std::string> legal_action_texts,
                                       double beta);

struct PriorDistribution {
  std::vector<int> actions;  // legal actions, ascending
  std::vector<double> probs;
};
// Prior of the acting player in `state`.
PriorDistribution prior_for_state(const PriorTable& table, const State& state, double beta);

// Flips exactly lround(x * N) entries chosen uniformly without replacement.
PriorTable corrupt_prior(const PriorTable& table, double noise_ratio, uint64_t seed);
// Fraction of entries whose binary logits agree. Both tables must cover the
// same pairs.
double prior_accuracy(const PriorTable& table, const PriorTable& reference);

// Exchanges the roles of color and rank hints in an (observation, action)
// pair: color c <-> rank c. Needs num_colors == num_ranks.
std::pair<std::string, std::string> swap_hint_roles(const std::string& obs,
                                                    const std::string& act,
                                                    const HanabiConfig& config);

// Dense lookup of a Hanabi prior for training and acting.
class CompiledHanabiPrior {
 public:
  CompiledHanabiPrior() = default;
  // Throws ContractViolation if the table misses any enumerated pair.
  CompiledHanabiPrior(const PriorTable& table, const HanabiConfig& config);

  int num_observations() const { return num_obs_; }
  int num_actions() const { return num_actions_; }
  // Index into hanabi_observation_texts order.
  int observation_index(const LastMove& move, int observer) const;
  double logit(int obs_index, int action) const {
    return logits_[static_cast<size_t>(obs_index) * num_actions_ + action];
  }
  // log Softmax(beta * logit) over legal actions; -inf on illegal ones.
  void log_prior(int obs_index, std::span<const uint8_t> legal, double beta,
                 std::span<double> out) const;
  void log_prior(const HanabiState& state, double beta, std::span<double> out) const;

 private:
  HanabiConfig config_;
  int num_obs_ = 0;
  int num_actions_ = 0;
  std::vector<double> logits_;
};

// Bob's prior in Say-Select, indexed by Alice's last utterance (1..5; row 0
// is uniform) and action 0..5, as log-probabilities.
using SaySelectLogPrior = std::array<std::array<double, 6>, 6>;
SaySelectLogPrior say_select_log_prior(const PriorTable& table, double beta);

}  // namespace instructrl

#endif  // INSTRUCTRL_PRIOR_H_
