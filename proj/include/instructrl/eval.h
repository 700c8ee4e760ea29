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

// Evaluation and analysis: self-play and cross-play reports, conditional
// action matrices, card knowledge at play time, Say-Select policy grids,
// noise and adaptation sweeps.

#ifndef INSTRUCTRL_EVAL_H_
#define INSTRUCTRL_EVAL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instructrl/config.h"
#include "instructrl/game.h"
#include "instructrl/hanabi_learn.h"
#include "instructrl/prior.h"
#include "instructrl/report.h"
#include "instructrl/say_select_train.h"
#include "json.hpp"

namespace instructrl {

struct EvalReport {
  std::string method;
  EnvConfig env;
  int n_games = 0;
  double mean_score = 0.0;
  double stderr_score = 0.0;  // sample stdev / sqrt(n)
  double mean_return = 0.0;   // discounted
  std::vector<int> scores;
  int games_lost = 0;  // Hanabi: out of lives
};
// Computes the summary fields from per-game scores.
EvalReport make_eval_report(std::string method, const EnvConfig& env, std::vector<int> scores,
                            std::vector<double> returns, int games_lost);
// Pools the games of several reports into one.
EvalReport pool_reports(std::string method, std::span<const EvalReport> reports);
void to_json(nlohmann::json& j, const EvalReport& r);
CsvTable eval_summary_csv(std::span<const EvalReport> reports);
CsvTable eval_games_csv(const EvalReport& report);

// Something that can sit in a seat: a trained Hanabi agent (batched fast
// path) or any game-core Policy.
struct EvalPlayer {
  std::string name;
  std::shared_ptr<const HanabiAgent> agent;
  std::shared_ptr<Policy> policy;
  bool pure_q = false;  // agents only: drop the prior term

  static EvalPlayer of(std::shared_ptr<const HanabiAgent> agent, std::string name,
                       bool pure_q = false);
  static EvalPlayer of(std::shared_ptr<Policy> policy, std::string name);
};

struct GameOutcome {
  uint64_t seed = 0;
  int score = 0;
  double discounted_return = 0.0;
  bool lost = false;
  int moves = 0;
  int seat_of_a = 0;  // seat player A occupied
};
using MoveObserver = std::function<void(size_t game, const State& before, int action)>;

// Game seeds for an evaluation: a stream derived from `seed`.
std::vector<uint64_t> eval_game_seeds(uint64_t seed, int n);
// Plays n games of A with B. With randomize_seats, A's seat in each game is a
// coin flip from a stream of the eval seed (independent of the game seeds).
std::vector<GameOutcome> play_matchup(const EnvConfig& env, const EvalPlayer& a,
                                      const EvalPlayer& b, int n, uint64_t seed,
                                      bool randomize_seats, const MoveObserver& observer = nullptr);

EvalReport selfplay_eval(const EvalPlayer& player, const EnvConfig& env, int n, uint64_t seed);
EvalReport crossplay_eval(const EvalPlayer& a, const EvalPlayer& b, const EnvConfig& env, int n,
                          uint64_t seed);

struct IntraAxpReport {
  std::vector<EvalReport> pairs;     // one per unordered pair of agents
  EvalReport aggregate;              // all pair games pooled
  std::vector<EvalReport> selfplay;  // one per agent
  EvalReport selfplay_aggregate;
  // |aggregate mean - selfplay mean| and the standard error of that difference.
  double gap = 0.0;
  double gap_stderr = 0.0;
};
IntraAxpReport intra_axp(std::span<const EvalPlayer> agents, const EnvConfig& env, int n,
                         uint64_t seed);

// Conditional action matrix: counts of (previous action, response) pairs
// over consecutive moves, globally normalized. First moves of each game have
// no predecessor and are kept aside so action marginals stay exact.
struct ActionMatrix {
  std::vector<std::string> labels;  // per action id
  std::vector<int64_t> counts;      // labels x labels, row = previous action
  std::vector<int64_t> first_moves;
  int64_t total = 0;  // sum of counts

  int size() const { return static_cast<int>(labels.size()); }
  int64_t count(int prev, int next) const { return counts[static_cast<size_t>(prev) * size() + next]; }
  double probability(int prev, int next) const;  // count / total
  double conditional(int prev, int next) const;  // count / row total
  // Every occurrence of `action` across the games (column marginal plus
  // first moves).
  int64_t action_total(int action) const;
};
ActionMatrix action_matrix_from_sequences(std::vector<std::string> labels,
                                          std::span<const std::vector<int>> games);
// P1.., D1.., Cr/Cg/.., R1.. in action-id order.
std::vector<std::string> hanabi_action_labels(const HanabiConfig& config);
ActionMatrix conditional_action_matrix(const EvalPlayer& player, const EnvConfig& env,
                                       int n = 1000, uint64_t seed = 0);
// Coarse view with categories play / discard / color hint / rank hint.
ActionMatrix reduce_by_move_type(const ActionMatrix& m, const HanabiConfig& config);
CsvTable action_matrix_csv(const ActionMatrix& m);
std::string action_matrix_svg(const ActionMatrix& m, const std::string& title);

struct HintCounts {
  int64_t color = 0;
  int64_t rank = 0;
  double color_fraction() const;  // color / (color + rank); 0 when no hints
};
HintCounts hint_counts(const ActionMatrix& m, const HanabiConfig& config);

struct CardKnowledgeReport {
  std::array<int64_t, 4> counts{};  // indexed by KnowledgeClass
  int64_t plays = 0;
  double fraction(KnowledgeClass k) const;
};
CardKnowledgeReport card_knowledge_report(const EvalPlayer& player, const EnvConfig& env, int n,
                                          uint64_t seed);
CsvTable card_knowledge_csv(const CardKnowledgeReport& r);

// Say-Select grid: 36 rows (two_ago, one_ago, action, ...); text rendering
// with rows two_ago in {-,1..5} and columns one_ago in {1..5,-}.
CsvTable bob_grid_csv(const BobGrid& grid);
std::string bob_grid_text(const BobGrid& grid);

// Supplies trained agents for sweeps; `tag` names the variant for caching.
using AgentProvider = std::function<std::shared_ptr<const HanabiAgent>(
    const std::string& tag, std::shared_ptr<const PriorTable> prior, uint64_t seed)>;
// Trains with `base` (seed overridden); with a cache directory, checkpoints
// are keyed by a hash of (tag, config, prior) and reused when present.
AgentProvider training_agent_provider(const HanabiTrainConfig& base,
                                      std::optional<std::filesystem::path> cache_dir = {},
                                      std::function<void(const std::string&)> log = nullptr);

struct NoiseSweepPoint {
  double noise = 0.0;
  double prior_accuracy = 1.0;  // mean over seeds, vs the clean table
  EvalReport crossplay;         // noisy agents with clean agents, pooled
};
// x = 0 is the intra-AXP of the clean agents (self-play if there is only one).
// For x > 0 each noisy seed is paired with every clean agent.
std::vector<NoiseSweepPoint> noise_sweep(std::shared_ptr<const PriorTable> clean,
                                         std::span<const double> noise_ratios,
                                         std::span<const uint64_t> clean_seeds,
                                         std::span<const uint64_t> noisy_seeds,
                                         const AgentProvider& provider, const EnvConfig& env,
                                         int n_games, uint64_t eval_seed);
CsvTable noise_sweep_csv(std::span<const NoiseSweepPoint> points);
std::string noise_sweep_svg(std::span<const NoiseSweepPoint> points, const std::string& title);

struct AdaptationPoint {
  double lambda = 0.0;
  EvalReport selfplay;
  std::optional<EvalReport> crossplay;  // with the partner, when given
};
std::vector<AdaptationPoint> adaptation_sweep(const HanabiAgent& base,
                                              std::shared_ptr<const PriorTable> prior,
                                              std::span<const double> lambdas,
                                              const EvalPlayer* partner, const EnvConfig& env,
                                              int n_games, uint64_t seed);
// Self-play means never rise over the upper half of the grid (the last
// ceil(n/2) points).
bool selfplay_non_increasing_top_half(std::span<const AdaptationPoint> points);
CsvTable adaptation_csv(std::span<const AdaptationPoint> points);
std::string adaptation_svg(std::span<const AdaptationPoint> points, const std::string& title);

}  // namespace instructrl

#endif  // INSTRUCTRL_EVAL_H_
