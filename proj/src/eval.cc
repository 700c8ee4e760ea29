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

#include "instructrl/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "instructrl/errors.h"
#include "instructrl/hanabi.h"
#include "instructrl/rng.h"
#include "instructrl/say_select.h"

namespace instructrl {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return out;
}

// The agent a player acts with in the batched path.
std::shared_ptr<const HanabiAgent> acting_agent(const EvalPlayer& p) {
  if (!p.pure_q || p.agent->kind() != HanabiLearner::kInstructQ) return p.agent;
  return std::make_shared<const HanabiAgent>(p.agent->adapted(p.agent->prior(), 0.0));
}

}  // namespace

// ---- reports ----

EvalReport make_eval_report(std::string method, const EnvConfig& env, std::vector<int> scores,
                            std::vector<double> returns, int games_lost) {
  EvalReport r;
  r.method = std::move(method);
  r.env = env;
  r.n_games = static_cast<int>(scores.size());
  if (games_lost < 0 || games_lost > r.n_games)
    throw ContractViolation("games_lost must lie in [0, n_games]");
  r.games_lost = games_lost;
  if (r.n_games > 0) {
    r.mean_score = std::accumulate(scores.begin(), scores.end(), 0.0) / r.n_games;
    r.mean_return = returns.empty()
                        ? 0.0
                        : std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
  }
  if (r.n_games > 1) {
    double ss = 0;
    for (int s : scores) ss += (s - r.mean_score) * (s - r.mean_score);
    r.stderr_score = std::sqrt(ss / (r.n_games - 1)) / std::sqrt(static_cast<double>(r.n_games));
  }
  r.scores = std::move(scores);
  return r;
}

EvalReport pool_reports(std::string method, std::span<const EvalReport> reports) {
  if (reports.empty()) throw ContractViolation("pool_reports: nothing to pool");
  std::vector<int> scores;
  int lost = 0;
  double ret = 0;
  for (const auto& r : reports) {
    scores.insert(scores.end(), r.scores.begin(), r.scores.end());
    lost += r.games_lost;
    ret += r.mean_return * r.n_games;
  }
  EvalReport out = make_eval_report(std::move(method), reports[0].env, std::move(scores), {}, lost);
  out.mean_return = out.n_games ? ret / out.n_games : 0.0;
  return out;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"method", r.method},         {"env", r.env},
       {"n_games", r.n_games},       {"mean_score", r.mean_score},
       {"stderr", r.stderr_score},   {"mean_return", r.mean_return},
       {"games_lost", r.games_lost}, {"scores", r.scores}};
}

CsvTable eval_summary_csv(std::span<const EvalReport> reports) {
  CsvTable t;
  t.header = {"method", "env", "n_games", "mean_score", "stderr", "mean_return", "games_lost"};
  for (const auto& r : reports)
    t.add_row({r.method, to_string(r.env.env_id), std::to_string(r.n_games),
               format_number(r.mean_score), format_number(r.stderr_score),
               format_number(r.mean_return), std::to_string(r.games_lost)});
  return t;
}

CsvTable eval_games_csv(const EvalReport& report) {
  CsvTable t;
  t.header = {"method", "game", "score"};
  for (size_t i = 0; i < report.scores.size(); ++i)
    t.add_row({report.method, std::to_string(i), std::to_string(report.scores[i])});
  return t;
}

// ---- playing ----

EvalPlayer EvalPlayer::of(std::shared_ptr<const HanabiAgent> agent, std::string name,
                          bool pure_q) {
  if (!agent) throw ContractViolation("EvalPlayer: null agent");
  EvalPlayer p;
  p.name = std::move(name);
  p.agent = std::move(agent);
  p.pure_q = pure_q;
  return p;
}

EvalPlayer EvalPlayer::of(std::shared_ptr<Policy> policy, std::string name) {
  if (!policy) throw ContractViolation("EvalPlayer: null policy");
  EvalPlayer p;
  p.name = std::move(name);
  p.policy = std::move(policy);
  return p;
}

std::vector<uint64_t> eval_game_seeds(uint64_t seed, int n) {
  Rng rng(derive_seed(seed, streams::kGame));
  std::vector<uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next_u64();
  return seeds;
}

std::vector<GameOutcome> play_matchup(const EnvConfig& env, const EvalPlayer& a,
                                      const EvalPlayer& b, int n, uint64_t seed,
                                      bool randomize_seats, const MoveObserver& observer) {
  if (n < 1) throw ConfigError("need at least one game");
  env.validate();
  const auto seeds = eval_game_seeds(seed, n);
  std::vector<int> seat_of_a(n, 0);
  if (randomize_seats) {
    Rng seat_rng(derive_seed(seed, streams::kSeatOrder));
    for (int& s : seat_of_a) s = seat_rng.bernoulli(0.5) ? 1 : 0;
  }
  std::vector<GameOutcome> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].seed = seeds[i];
    out[i].seat_of_a = seat_of_a[i];
  }

  if (env.env_id == EnvId::kHanabi && a.agent && b.agent) {
    const auto agent_a = acting_agent(a), agent_b = acting_agent(b);
    std::vector<std::array<const HanabiAgent*, 2>> seating(n);
    for (int i = 0; i < n; ++i)
      seating[i] = seat_of_a[i] == 0 ? std::array{agent_a.get(), agent_b.get()}
                                     : std::array{agent_b.get(), agent_a.get()};
    HanabiMoveObserver obs;
    if (observer)
      obs = [&](size_t g, const HanabiState& s, int action) { observer(g, s, action); };
    const auto games = play_hanabi_games(env, seeds, seating, false, obs);
    for (int i = 0; i < n; ++i) {
      out[i].score = games[i].score;
      out[i].discounted_return = games[i].discounted_return;
      out[i].lost = games[i].lost;
      out[i].moves = games[i].moves;
    }
    return out;
  }

  for (const EvalPlayer* p : {&a, &b})
    if (!p->policy && !p->agent) throw ContractViolation("EvalPlayer without a policy");
  // Agents outside the batched path go through their Policy wrapper.
  auto policy_of = [](const EvalPlayer& p) -> std::shared_ptr<Policy> {
    if (p.policy) return p.policy;
    return std::make_shared<HanabiAgentPolicy>(p.agent, p.pure_q);
  };
  const auto pa = policy_of(a), pb = policy_of(b);
  for (int i = 0; i < n; ++i) {
    Policy* seats[2] = {pa.get(), pb.get()};
    if (seat_of_a[i] == 1) std::swap(seats[0], seats[1]);
    auto state = new_initial_state(env, seeds[i]);
    Rng rng(derive_seed(seeds[i], streams::kPolicy));
    double discount = 1.0;
    while (!state->is_terminal()) {
      Policy* p = seats[state->current_player()];
      const int action = p->decide(*state, rng).action;
      if (!state->is_legal(action))
        throw ContractViolation("policy '" + p->name() + "' returned illegal action " +
                                std::to_string(action));
      if (observer) observer(i, *state, action);
      out[i].discounted_return += discount * state->apply_action(action);
      discount *= env.gamma;
    }
    out[i].score = state->score();
    out[i].moves = state->move_number();
    if (const auto* h = dynamic_cast<const HanabiState*>(state.get()))
      out[i].lost = h->end_reason() == HanabiEndReason::kOutOfLives;
  }
  return out;
}

namespace {

EvalReport report_from(std::string method, const EnvConfig& env,
                       const std::vector<GameOutcome>& games) {
  std::vector<int> scores;
  std::vector<double> returns;
  int lost = 0;
  for (const auto& g : games) {
    scores.push_back(g.score);
    returns.push_back(g.discounted_return);
    lost += g.lost;
  }
  return make_eval_report(std::move(method), env, std::move(scores), std::move(returns), lost);
}

}  // namespace

EvalReport selfplay_eval(const EvalPlayer& player, const EnvConfig& env, int n, uint64_t seed) {
  return report_from("selfplay:" + player.name, env,
                     play_matchup(env, player, player, n, seed, false));
}

EvalReport crossplay_eval(const EvalPlayer& a, const EvalPlayer& b, const EnvConfig& env, int n,
                          uint64_t seed) {
  return report_from("crossplay:" + a.name + "|" + b.name, env,
                     play_matchup(env, a, b, n, seed, true));
}

IntraAxpReport intra_axp(std::span<const EvalPlayer> agents, const EnvConfig& env, int n,
                         uint64_t seed) {
  if (agents.size() < 2) throw ConfigError("intra-AXP needs at least two agents");
  IntraAxpReport r;
  for (size_t i = 0; i < agents.size(); ++i) {
    r.selfplay.push_back(selfplay_eval(agents[i], env, n, seed));
    for (size_t j = i + 1; j < agents.size(); ++j)
      r.pairs.push_back(crossplay_eval(agents[i], agents[j], env, n, seed));
  }
  r.aggregate = pool_reports("intra_axp", r.pairs);
  r.selfplay_aggregate = pool_reports("selfplay", r.selfplay);
  r.gap = std::abs(r.aggregate.mean_score - r.selfplay_aggregate.mean_score);
  r.gap_stderr = std::hypot(r.aggregate.stderr_score, r.selfplay_aggregate.stderr_score);
  return r;
}

// ---- action matrix ----

double ActionMatrix::probability(int prev, int next) const {
  return total ? static_cast<double>(count(prev, next)) / total : 0.0;
}

double ActionMatrix::conditional(int prev, int next) const {
  int64_t row = 0;
  for (int j = 0; j < size(); ++j) row += count(prev, j);
  return row ? static_cast<double>(count(prev, next)) / row : 0.0;
}

int64_t ActionMatrix::action_total(int action) const {
  int64_t t = first_moves[action];
  for (int i = 0; i < size(); ++i) t += count(i, action);
  return t;
}

ActionMatrix action_matrix_from_sequences(std::vector<std::string> labels,
                                          std::span<const std::vector<int>> games) {
  ActionMatrix m;
  m.labels = std::move(labels);
  const int A = m.size();
  m.counts.assign(static_cast<size_t>(A) * A, 0);
  m.first_moves.assign(A, 0);
  for (const auto& g : games) {
    for (size_t t = 0; t < g.size(); ++t) {
      if (g[t] < 0 || g[t] >= A) throw ContractViolation("action id outside the label set");
      if (t == 0) {
        ++m.first_moves[g[t]];
      } else {
        ++m.counts[static_cast<size_t>(g[t - 1]) * A + g[t]];
        ++m.total;
      }
    }
  }
  return m;
}

std::vector<std::string> hanabi_action_labels(const HanabiConfig& config) {
  std::vector<std::string> labels;
  for (int id = 0; id < config.num_actions(); ++id) {
    const HanabiAction a = HanabiAction::from_id(id, config);
    switch (a.type) {
      case HanabiAction::Type::kPlay: labels.push_back("P" + std::to_string(a.value + 1)); break;
      case HanabiAction::Type::kDiscard:
        labels.push_back("D" + std::to_string(a.value + 1));
        break;
      case HanabiAction::Type::kHintColor:
        labels.push_back(std::string("C") +
                         static_cast<char>(std::tolower(color_letter(a.value))));
        break;
      case HanabiAction::Type::kHintRank:
        labels.push_back("R" + std::to_string(a.value + 1));
        break;
    }
  }
  return labels;
}

ActionMatrix conditional_action_matrix(const EvalPlayer& player, const EnvConfig& env, int n,
                                       uint64_t seed) {
  std::vector<std::vector<int>> games(n);
  play_matchup(env, player, player, n, seed, false,
               [&](size_t g, const State&, int action) { games[g].push_back(action); });
  return action_matrix_from_sequences(hanabi_action_labels(env.hanabi), games);
}

ActionMatrix reduce_by_move_type(const ActionMatrix& m, const HanabiConfig& config) {
  ActionMatrix r;
  r.labels = {"play", "discard", "hint_color", "hint_rank"};
  r.counts.assign(16, 0);
  r.first_moves.assign(4, 0);
  auto group = [&](int id) { return static_cast<int>(HanabiAction::from_id(id, config).type); };
  for (int i = 0; i < m.size(); ++i) {
    r.first_moves[group(i)] += m.first_moves[i];
    for (int j = 0; j < m.size(); ++j) r.counts[group(i) * 4 + group(j)] += m.count(i, j);
  }
  r.total = m.total;
  return r;
}

CsvTable action_matrix_csv(const ActionMatrix& m) {
  CsvTable t;
  t.header = {"kind", "prev", "next", "count", "probability", "conditional"};
  int64_t first_total = 0;
  for (int64_t c : m.first_moves) first_total += c;
  for (int i = 0; i < m.size(); ++i)
    for (int j = 0; j < m.size(); ++j)
      t.add_row({"pair", m.labels[i], m.labels[j], std::to_string(m.count(i, j)),
                 format_number(m.probability(i, j)), format_number(m.conditional(i, j))});
  for (int j = 0; j < m.size(); ++j)
    t.add_row({"first", "", m.labels[j], std::to_string(m.first_moves[j]),
               format_number(first_total ? static_cast<double>(m.first_moves[j]) / first_total
                                         : 0.0),
               ""});
  return t;
}

std::string action_matrix_svg(const ActionMatrix& m, const std::string& title) {
  std::vector<double> cond(static_cast<size_t>(m.size()) * m.size());
  for (int i = 0; i < m.size(); ++i)
    for (int j = 0; j < m.size(); ++j) cond[static_cast<size_t>(i) * m.size() + j] = m.conditional(i, j);
  return svg_heatmap(title, m.labels, m.labels, cond);
}

double HintCounts::color_fraction() const {
  return color + rank ? static_cast<double>(color) / (color + rank) : 0.0;
}

HintCounts hint_counts(const ActionMatrix& m, const HanabiConfig& config) {
  if (m.size() != config.num_actions()) throw ContractViolation("matrix is not over action ids");
  HintCounts h;
  for (int a = 0; a < m.size(); ++a) {
    const auto type = HanabiAction::from_id(a, config).type;
    if (type == HanabiAction::Type::kHintColor) h.color += m.action_total(a);
    if (type == HanabiAction::Type::kHintRank) h.rank += m.action_total(a);
  }
  return h;
}

// ---- card knowledge ----

double CardKnowledgeReport::fraction(KnowledgeClass k) const {
  return plays ? static_cast<double>(counts[static_cast<int>(k)]) / plays : 0.0;
}

CardKnowledgeReport card_knowledge_report(const EvalPlayer& player, const EnvConfig& env, int n,
                                          uint64_t seed) {
  if (env.env_id != EnvId::kHanabi) throw ConfigError("card knowledge needs Hanabi");
  CardKnowledgeReport r;
  play_matchup(env, player, player, n, seed, false, [&](size_t, const State& s, int action) {
    const auto& h = static_cast<const HanabiState&>(s);
    const HanabiAction a = HanabiAction::from_id(action, h.hanabi());
    if (a.type != HanabiAction::Type::kPlay) return;
    ++r.counts[static_cast<int>(h.card_knowledge_class(h.current_player(), a.value))];
    ++r.plays;
  });
  return r;
}

CsvTable card_knowledge_csv(const CardKnowledgeReport& r) {
  CsvTable t;
  t.header = {"knowledge", "count", "fraction"};
  for (KnowledgeClass k : {KnowledgeClass::kOnlyColor, KnowledgeClass::kOnlyRank,
                           KnowledgeClass::kBoth, KnowledgeClass::kNone})
    t.add_row({to_string(k), std::to_string(r.counts[static_cast<int>(k)]),
               format_number(r.fraction(k))});
  return t;
}

// ---- Say-Select grid ----

CsvTable bob_grid_csv(const BobGrid& grid) {
  CsvTable t;
  t.header = {"two_ago", "one_ago", "action", "label", "reachable", "intuitive"};
  auto utter = [](int v) { return v == 0 ? std::string("none") : std::to_string(v); };
  for (int two = 0; two < 6; ++two)
    for (int one = 0; one < 6; ++one) {
      const int a = grid[two][one];
      const bool reachable = is_reachable_bob_cell(two, one);
      t.add_row({utter(two), utter(one), std::to_string(a),
                 a == SaySelectState::kQuit ? "Q" : std::to_string(a), reachable ? "1" : "0",
                 reachable ? std::to_string(intuitive_bob_action(two, one)) : ""});
    }
  return t;
}

std::string bob_grid_text(const BobGrid& grid) {
  // Columns as in the usual figure: one_ago 1..5 then none.
  const int cols[] = {1, 2, 3, 4, 5, 0};
  std::string out = "two_ago\\one_ago  1  2  3  4  5  -\n";
  for (int two = 0; two < 6; ++two) {
    out += two == 0 ? std::string("              -") : "              " + std::to_string(two);
    for (int one : cols) {
      const int a = grid[two][one];
      out += "  ";
      out += a == SaySelectState::kQuit ? 'Q' : static_cast<char>('0' + a);
    }
    out += '\n';
  }
  return out;
}

// ---- sweeps ----

AgentProvider training_agent_provider(const HanabiTrainConfig& base,
                                      std::optional<std::filesystem::path> cache_dir,
                                      std::function<void(const std::string&)> log) {
  return [base, cache_dir, log](const std::string& tag, std::shared_ptr<const PriorTable> prior,
                                uint64_t seed) -> std::shared_ptr<const HanabiAgent> {
    HanabiTrainConfig c = base;
    c.seed = seed;
    const nlohmann::json key = {{"tag", tag},
                                {"config", c},
                                {"prior", prior ? prior->to_json() : nlohmann::json(nullptr)}};
    std::filesystem::path path;
    if (cache_dir) {
      path = *cache_dir /
             (safe_name(tag) + "-s" + std::to_string(seed) + "-" + hex16(fnv1a(key.dump())) +
              ".ckpt.json");
      if (std::filesystem::exists(path)) {
        if (log) log("cached " + path.filename().string());
        return std::make_shared<const HanabiAgent>(load_checkpoint(path).agent);
      }
    }
    if (log) log("training " + tag + " seed " + std::to_string(seed));
    HanabiTrainResult r = train_hanabi(c, prior);
    if (cache_dir) save_checkpoint(path, r, key);
    return std::make_shared<const HanabiAgent>(std::move(r.agent));
  };
}

std::vector<NoiseSweepPoint> noise_sweep(std::shared_ptr<const PriorTable> clean,
                                         std::span<const double> noise_ratios,
                                         std::span<const uint64_t> clean_seeds,
                                         std::span<const uint64_t> noisy_seeds,
                                         const AgentProvider& provider, const EnvConfig& env,
                                         int n_games, uint64_t eval_seed) {
  if (!clean) throw ConfigError("noise sweep needs a clean prior");
  if (clean_seeds.empty() || noisy_seeds.empty()) throw ConfigError("noise sweep needs seeds");
  std::vector<EvalPlayer> clean_players;
  for (uint64_t s : clean_seeds)
    clean_players.push_back(
        EvalPlayer::of(provider("clean", clean, s), "clean_s" + std::to_string(s)));
  std::vector<NoiseSweepPoint> points;
  for (double x : noise_ratios) {
    NoiseSweepPoint p;
    p.noise = x;
    if (x == 0.0) {
      p.crossplay = clean_players.size() > 1
                        ? intra_axp(clean_players, env, n_games, eval_seed).aggregate
                        : selfplay_eval(clean_players[0], env, n_games, eval_seed);
      p.crossplay.method = "noise:0";
      points.push_back(std::move(p));
      continue;
    }
    std::vector<EvalReport> reports;
    double acc = 0;
    for (uint64_t s : noisy_seeds) {
      auto noisy = std::make_shared<const PriorTable>(
          corrupt_prior(*clean, x, derive_seed(s, streams::kCorruption)));
      acc += prior_accuracy(*noisy, *clean);
      const EvalPlayer player = EvalPlayer::of(provider("noise_" + format_number(x), noisy, s),
                                               "noise" + format_number(x) + "_s" +
                                                   std::to_string(s));
      for (const auto& c : clean_players)
        reports.push_back(crossplay_eval(player, c, env, n_games, eval_seed));
    }
    p.prior_accuracy = acc / noisy_seeds.size();
    p.crossplay = pool_reports("noise:" + format_number(x), reports);
    points.push_back(std::move(p));
  }
  return points;
}

CsvTable noise_sweep_csv(std::span<const NoiseSweepPoint> points) {
  CsvTable t;
  t.header = {"noise", "prior_accuracy", "n_games", "crossplay_mean", "crossplay_stderr"};
  for (const auto& p : points)
    t.add_row({format_number(p.noise), format_number(p.prior_accuracy),
               std::to_string(p.crossplay.n_games), format_number(p.crossplay.mean_score),
               format_number(p.crossplay.stderr_score)});
  return t;
}

std::string noise_sweep_svg(std::span<const NoiseSweepPoint> points, const std::string& title) {
  PlotSeries s;
  s.name = "cross-play vs clean";
  for (const auto& p : points) {
    s.x.push_back(p.noise);
    s.y.push_back(p.crossplay.mean_score);
    s.err.push_back(p.crossplay.stderr_score);
  }
  return svg_line_plot(title, "noise ratio", "score", std::span<const PlotSeries>(&s, 1));
}

std::vector<AdaptationPoint> adaptation_sweep(const HanabiAgent& base,
                                              std::shared_ptr<const PriorTable> prior,
                                              std::span<const double> lambdas,
                                              const EvalPlayer* partner, const EnvConfig& env,
                                              int n_games, uint64_t seed) {
  std::vector<AdaptationPoint> points;
  for (double lambda : lambdas) {
    auto adapted = std::make_shared<const HanabiAgent>(adapt_policy(base, prior, lambda));
    const EvalPlayer p = EvalPlayer::of(adapted, "adapt" + format_number(lambda));
    AdaptationPoint pt;
    pt.lambda = lambda;
    pt.selfplay = selfplay_eval(p, env, n_games, seed);
    if (partner) pt.crossplay = crossplay_eval(p, *partner, env, n_games, seed);
    points.push_back(std::move(pt));
  }
  return points;
}

bool selfplay_non_increasing_top_half(std::span<const AdaptationPoint> points) {
  const size_t n = points.size();
  const size_t start = n - (n + 1) / 2;
  for (size_t i = start + 1; i < n; ++i)
    if (points[i].selfplay.mean_score > points[i - 1].selfplay.mean_score) return false;
  return true;
}

CsvTable adaptation_csv(std::span<const AdaptationPoint> points) {
  CsvTable t;
  t.header = {"lambda", "selfplay_mean", "selfplay_stderr", "crossplay_mean", "crossplay_stderr"};
  for (const auto& p : points)
    t.add_row({format_number(p.lambda), format_number(p.selfplay.mean_score),
               format_number(p.selfplay.stderr_score),
               p.crossplay ? format_number(p.crossplay->mean_score) : "",
               p.crossplay ? format_number(p.crossplay->stderr_score) : ""});
  return t;
}

std::string adaptation_svg(std::span<const AdaptationPoint> points, const std::string& title) {
  PlotSeries self, cross;
  self.name = "self-play";
  self.dashed = true;
  cross.name = "cross-play";
  for (const auto& p : points) {
    self.x.push_back(p.lambda);
    self.y.push_back(p.selfplay.mean_score);
    self.err.push_back(p.selfplay.stderr_score);
    if (p.crossplay) {
      cross.x.push_back(p.lambda);
      cross.y.push_back(p.crossplay->mean_score);
      cross.err.push_back(p.crossplay->stderr_score);
    }
  }
  std::vector<PlotSeries> series{self};
  if (!cross.x.empty()) series.push_back(cross);
  return svg_line_plot(title, "lambda", "score", series);
}

}  // namespace instructrl
