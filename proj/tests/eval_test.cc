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

#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>

#include "doctest.h"
#include "instructrl/backend.h"
#include "instructrl/errors.h"
#include "instructrl/eval.h"
#include "instructrl/lang.h"
#include "test_util.h"

namespace instructrl {
namespace {

std::shared_ptr<const PriorTable> mini_prior(const std::string& focus) {
  auto backend = make_backend("oracle_" + focus);
  return std::make_shared<PriorTable>(build_prior_table(
      EnvConfig::hanabi_mini(), instruction_by_key(focus), *backend, 1.0));
}

HanabiTrainConfig tiny_q(uint64_t seed) {
  HanabiTrainConfig c = HanabiTrainConfig::instructq_defaults(300);
  c.hidden = {24};
  c.num_envs = 8;
  c.batch_size = 32;
  c.learning_starts = 200;
  c.replay_capacity = 2000;
  c.target_period = 20;
  c.eval_every = 300;
  c.eval_games = 10;
  c.seed = seed;
  return c;
}

std::shared_ptr<const HanabiAgent> tiny_agent(uint64_t seed,
                                              std::shared_ptr<const PriorTable> prior = nullptr) {
  return std::make_shared<const HanabiAgent>(train_hanabi(tiny_q(seed), prior).agent);
}

EvalPlayer random_player() {
  return EvalPlayer::of(std::make_shared<UniformRandomPolicy>(), "random");
}

TEST_CASE("report stderr is sample stdev over sqrt n") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  const EvalReport r = make_eval_report("x", env, {1, 2, 3, 4}, {0.5, 1.5}, 1);
  CHECK(r.mean_score == doctest::Approx(2.5));
  CHECK(r.stderr_score == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(r.mean_return == doctest::Approx(1.0));
  CHECK(make_eval_report("y", env, {7}, {}, 0).stderr_score == 0.0);
  CHECK_THROWS_AS(make_eval_report("z", env, {1}, {}, 2), ContractViolation);

  const EvalReport a = make_eval_report("a", env, {1, 2}, {}, 0);
  const EvalReport b = make_eval_report("b", env, {3, 4}, {}, 1);
  const std::vector<EvalReport> both{a, b};
  const EvalReport p = pool_reports("p", both);
  CHECK(p.n_games == 4);
  CHECK(p.games_lost == 1);
  CHECK(p.stderr_score == doctest::Approx(r.stderr_score));
}

TEST_CASE("intuitive say-select pair collects every +1 ball") {
  const EnvConfig env = EnvConfig::say_select_default();
  const EvalPlayer alice = EvalPlayer::of(std::make_shared<testing::IntuitiveAlice>(), "alice");
  const EvalPlayer bob = EvalPlayer::of(std::make_shared<testing::IntuitiveBob>(), "bob");
  const auto games = play_matchup(env, alice, bob, 2000, 3, false);
  double sum = 0, ss = 0;
  for (const auto& g : games) {
    CHECK(g.score >= 1);
    CHECK(g.score <= 5);
    sum += g.score;
  }
  const double mean = sum / games.size();
  for (const auto& g : games) ss += (g.score - mean) * (g.score - mean);
  const double se = std::sqrt(ss / (games.size() - 1) / games.size());
  // k ~ U{1..5}, so the expected score is 3.
  CHECK(std::abs(mean - 3.0) < 4 * se);
}

TEST_CASE("random play on full hanabi scores little and mostly bombs") {
  const EvalReport r = selfplay_eval(random_player(), EnvConfig::hanabi_full(), 200, 11);
  CHECK(r.n_games == 200);
  CHECK(r.mean_score >= 0.0);
  CHECK(r.mean_score <= 2.0);
  CHECK(r.games_lost > 100);
}

TEST_CASE("matchups are deterministic and seat flips are balanced") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  const auto p = random_player();
  const auto a = play_matchup(env, p, p, 300, 42, true);
  const auto b = play_matchup(env, p, p, 300, 42, true);
  int seat1 = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].score == b[i].score);
    CHECK(a[i].seat_of_a == b[i].seat_of_a);
    seat1 += a[i].seat_of_a;
  }
  CHECK(seat1 > 100);
  CHECK(seat1 < 200);
  // Seat flips do not touch the game seeds.
  const auto c = play_matchup(env, p, p, 300, 42, false);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].seed == c[i].seed);
}

TEST_CASE("agents: batched path matches the policy wrapper, crossplay with self is selfplay") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  const auto prior = mini_prior("color");
  const auto agent = tiny_agent(1, prior);
  for (bool pure : {false, true}) {
    const EvalPlayer fast = EvalPlayer::of(agent, "fast", pure);
    const EvalPlayer slow = EvalPlayer::of(
        std::make_shared<HanabiAgentPolicy>(agent, pure), "slow");
    const auto f = play_matchup(env, fast, fast, 60, 8, true);
    const auto s = play_matchup(env, slow, slow, 60, 8, true);
    for (size_t i = 0; i < f.size(); ++i) {
      CHECK(f[i].score == s[i].score);
      CHECK(f[i].moves == s[i].moves);
      CHECK(f[i].lost == s[i].lost);
      CHECK(f[i].discounted_return == doctest::Approx(s[i].discounted_return));
    }
  }
  const EvalPlayer p = EvalPlayer::of(agent, "a");
  const EvalReport self = selfplay_eval(p, env, 100, 5);
  const EvalReport cross = crossplay_eval(p, p, env, 100, 5);
  CHECK(self.scores == cross.scores);
}

TEST_CASE("intra-AXP pools pairs and self-play") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  std::vector<EvalPlayer> players;
  for (uint64_t s : {1, 2, 3}) players.push_back(EvalPlayer::of(tiny_agent(s), std::to_string(s)));
  const IntraAxpReport r = intra_axp(players, env, 40, 7);
  CHECK(r.pairs.size() == 3);
  CHECK(r.selfplay.size() == 3);
  CHECK(r.aggregate.n_games == 120);
  CHECK(r.gap == doctest::Approx(std::abs(r.aggregate.mean_score - r.selfplay_aggregate.mean_score)));
  CHECK(r.gap_stderr > 0.0);
  CHECK_THROWS_AS(intra_axp(std::span(players).first(1), env, 10, 1), ConfigError);
}

TEST_CASE("action matrix normalizes and counts") {
  const std::vector<std::vector<int>> games{{0, 1, 1, 2}, {2, 2}};
  const ActionMatrix m = action_matrix_from_sequences({"a", "b", "c"}, games);
  CHECK(m.total == 4);
  CHECK(m.first_moves == std::vector<int64_t>{1, 0, 1});
  CHECK(m.count(1, 1) == 1);
  CHECK(m.conditional(1, 2) == doctest::Approx(0.5));
  double sum = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) sum += m.probability(i, j);
  CHECK(sum == doctest::Approx(1.0));
  CHECK(m.action_total(2) == 3);

  // One action repeated fills a single cell.
  const std::vector<std::vector<int>> same{{1, 1, 1}, {1, 1}};
  const ActionMatrix one = action_matrix_from_sequences({"a", "b", "c"}, same);
  CHECK(one.probability(1, 1) == doctest::Approx(1.0));
  CHECK(one.total == 3);
  const std::vector<std::vector<int>> bad{{5}};
  CHECK_THROWS_AS(action_matrix_from_sequences({"a"}, bad), ContractViolation);
}

TEST_CASE("hint ratio from the matrix equals direct counting") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  const auto p = random_player();
  int64_t color = 0, rank = 0, moves = 0;
  play_matchup(env, p, p, 150, 21, false, [&](size_t, const State&, int action) {
    const auto t = HanabiAction::from_id(action, env.hanabi).type;
    color += t == HanabiAction::Type::kHintColor;
    rank += t == HanabiAction::Type::kHintRank;
    ++moves;
  });
  const ActionMatrix m = conditional_action_matrix(p, env, 150, 21);
  const HintCounts h = hint_counts(m, env.hanabi);
  CHECK(h.color == color);
  CHECK(h.rank == rank);
  CHECK(h.color_fraction() == doctest::Approx(static_cast<double>(color) / (color + rank)));
  CHECK(m.labels == hanabi_action_labels(env.hanabi));
  CHECK(m.labels.size() == 11);

  const ActionMatrix r = reduce_by_move_type(m, env.hanabi);
  CHECK(r.size() == 4);
  CHECK(r.total == m.total);
  int64_t firsts = std::accumulate(r.first_moves.begin(), r.first_moves.end(), int64_t{0});
  CHECK(r.total + firsts == moves);

  const CsvTable csv = action_matrix_csv(m);
  CHECK(csv.rows.size() == 11 * 11 + 11);
  CHECK(action_matrix_svg(m, "t").find("<svg") != std::string::npos);
}

TEST_CASE("card knowledge fractions sum to one") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  const CardKnowledgeReport r = card_knowledge_report(random_player(), env, 200, 4);
  CHECK(r.plays > 0);
  int64_t total = 0;
  double f = 0;
  for (auto k : {KnowledgeClass::kOnlyColor, KnowledgeClass::kOnlyRank, KnowledgeClass::kBoth,
                 KnowledgeClass::kNone}) {
    total += r.counts[static_cast<int>(k)];
    f += r.fraction(k);
  }
  CHECK(total == r.plays);
  CHECK(f == doctest::Approx(1.0));
  CHECK(card_knowledge_csv(r).rows.size() == 4);
  CHECK_THROWS_AS(card_knowledge_report(random_player(), EnvConfig::say_select_default(), 5, 1),
                  ConfigError);
}

TEST_CASE("bob grid rendering") {
  const QTable zero{SaySelectState::kNumBobKeys, SaySelectState::kNumActions};
  const BobGrid g = bob_policy_grid(zero, nullptr, 0.0);
  for (const auto& row : g)
    for (int a : row) CHECK(a == 0);
  const CsvTable csv = bob_grid_csv(g);
  CHECK(csv.rows.size() == 36);
  const std::string text = bob_grid_text(g);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}

TEST_CASE("noise sweep and adaptation sweep") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  const auto clean = mini_prior("rank");
  int trained = 0;
  const auto dir = std::filesystem::temp_directory_path() / "instructrl_eval_cache";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  HanabiTrainConfig base = tiny_q(0);
  AgentProvider provider =
      training_agent_provider(base, dir, [&](const std::string& m) { trained += m.rfind("training", 0) == 0; });
  const std::vector<double> noise{0.0, 1.0};
  const std::vector<uint64_t> clean_seeds{1, 2}, noisy_seeds{3};
  const auto pts = noise_sweep(clean, noise, clean_seeds, noisy_seeds, provider, env, 30, 9);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].crossplay.n_games == 30);
  CHECK(pts[1].crossplay.n_games == 60);
  CHECK(pts[1].prior_accuracy < 1.0);
  CHECK(trained == 3);
  // Second run hits the cache and reproduces the numbers.
  const auto again = noise_sweep(clean, noise, clean_seeds, noisy_seeds, provider, env, 30, 9);
  CHECK(trained == 3);
  CHECK(again[1].crossplay.scores == pts[1].crossplay.scores);
  CHECK(noise_sweep_csv(pts).rows.size() == 2);
  CHECK(noise_sweep_svg(pts, "n").find("<svg") != std::string::npos);
  std::filesystem::remove_all(dir);

  const auto agent = tiny_agent(4, clean);
  const EvalPlayer partner = EvalPlayer::of(tiny_agent(5, clean), "partner");
  const std::vector<double> lambdas{0.0, 0.5, 5.0};
  const auto ad = adaptation_sweep(*agent, mini_prior("color"), lambdas, &partner, env, 40, 2);
  REQUIRE(ad.size() == 3);
  CHECK(ad[0].crossplay.has_value());
  // lambda 0 acts as the base policy.
  CHECK(ad[0].selfplay.scores ==
        selfplay_eval(EvalPlayer::of(agent, "b", true), env, 40, 2).scores);
  CHECK(adaptation_csv(ad).rows.size() == 3);
  CHECK(adaptation_svg(ad, "a").find("<svg") != std::string::npos);
}

TEST_CASE("non-increasing check looks at the upper half only") {
  auto pt = [](double mean) {
    AdaptationPoint p;
    p.selfplay.mean_score = mean;
    return p;
  };
  const std::vector<AdaptationPoint> ok{pt(1), pt(5), pt(4), pt(4), pt(3)};
  const std::vector<AdaptationPoint> bad{pt(5), pt(4), pt(3), pt(2), pt(3)};
  CHECK(selfplay_non_increasing_top_half(ok));
  CHECK_FALSE(selfplay_non_increasing_top_half(bad));
}

}  // namespace
}  // namespace instructrl
