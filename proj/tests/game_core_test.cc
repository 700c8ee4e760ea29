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

#include <set>

#include "doctest.h"
#include "instructrl/errors.h"
#include "instructrl/game.h"
#include "instructrl/say_select.h"
#include "test_util.h"

namespace instructrl {
namespace {

using testing::IntuitiveAlice;
using testing::IntuitiveBob;

// Chi-square critical value, 4 degrees of freedom, p = 0.01.
constexpr double kChi4At01 = 13.277;

TEST_CASE("config validation rejects bad horizons and discounts") {
  EnvConfig c = EnvConfig::say_select_default();
  c.max_steps = 0;
  CHECK_THROWS_AS(reset(c, 1), ConfigError);
  c = EnvConfig::say_select_default();
  c.gamma = 0.0;
  CHECK_THROWS_AS(reset(c, 1), ConfigError);
  c.gamma = 1.0;
  CHECK_NOTHROW(reset(c, 1));
  c.gamma = 1.5;
  CHECK_THROWS_AS(reset(c, 1), ConfigError);
}

TEST_CASE("config round-trips through json") {
  for (const EnvConfig& c : {EnvConfig::say_select_default(), EnvConfig::hanabi_full(),
                             EnvConfig::hanabi_mini()}) {
    nlohmann::json j = c;
    CHECK(j.get<EnvConfig>() == c);
  }
  nlohmann::json preset = {{"env_id", "hanabi"}, {"hanabi", "mini"}};
  const EnvConfig mini = preset.get<EnvConfig>();
  CHECK(mini.hanabi.num_colors == 2);
  CHECK(mini.hanabi.hand_size == 2);
}

TEST_CASE("reset is deterministic in the seed") {
  const auto a = reset(EnvConfig::say_select_default(), 7);
  const auto b = reset(EnvConfig::say_select_default(), 7);
  CHECK(a.state->to_json().dump() == b.state->to_json().dump());
  CHECK(a.observations == b.observations);
  const auto h1 = reset(EnvConfig::hanabi_full(), 7);
  const auto h2 = reset(EnvConfig::hanabi_full(), 7);
  CHECK(h1.state->to_json().dump() == h2.state->to_json().dump());
}

TEST_CASE("say-select reset draws k uniformly from 1..5") {
  std::vector<int> counts(5, 0);
  for (uint64_t seed = 0; seed < 100000; ++seed) {
    SaySelectState s(EnvConfig::say_select_default(), seed);
    const int k = s.num_positive();
    REQUIRE(k >= 1);
    REQUIRE(k <= 5);
    ++counts[k - 1];
  }
  CHECK(testing::chi_square_uniform(counts) < kChi4At01);
}

TEST_CASE("say-select positions are uniform given k") {
  // Each ball is positive with probability E[k]/5 = 3/5.
  std::vector<int> per_ball(5, 0);
  const int n = 50000;
  for (int seed = 0; seed < n; ++seed) {
    SaySelectState s(EnvConfig::say_select_default(), seed);
    for (int i = 0; i < 5; ++i) per_ball[i] += s.ball_rewards()[i] > 0;
  }
  CHECK(testing::chi_square_uniform(per_ball) < kChi4At01);
}

TEST_CASE("say-select zero-positive override allows k = 0") {
  EnvConfig c = EnvConfig::say_select_default();
  c.say_select.allow_zero_positive = true;
  bool saw_zero = false;
  for (uint64_t seed = 0; seed < 200 && !saw_zero; ++seed)
    saw_zero = SaySelectState(c, seed).num_positive() == 0;
  CHECK(saw_zero);
}

TEST_CASE("say-select pick of a +1 ball pays and flips it") {
  SaySelectState s(EnvConfig::say_select_default(), {1, -1, 1, -1, -1});
  CHECK(s.apply_action(1) == 0);  // Alice says 1
  CHECK(s.current_player() == SaySelectState::kBob);
  CHECK(s.apply_action(1) == 1);
  CHECK(s.ball_rewards()[0] == -1);
  CHECK(s.apply_action(1) == 0);
  CHECK(s.apply_action(1) == -1);  // second pick of the same ball
}

TEST_CASE("say-select picking a -1 ball costs one") {
  SaySelectState s(EnvConfig::say_select_default(), {1, 1, -1, -1, -1});
  s.apply_action(5);
  CHECK(s.apply_action(5) == -1);
}

TEST_CASE("say-select quit ends the game with zero reward") {
  SaySelectState s(EnvConfig::say_select_default(), {1, 1, 1, 1, 1});
  s.apply_action(3);
  CHECK(s.apply_action(SaySelectState::kQuit) == 0);
  CHECK(s.is_terminal());
  CHECK(s.score() == 0);
  CHECK(s.legal_actions().empty());
  CHECK_THROWS_AS(s.apply_action(1), ContractViolation);
}

TEST_CASE("say-select action sets and phase checks") {
  SaySelectState s(EnvConfig::say_select_default(), 3);
  CHECK(s.legal_actions() == std::vector<int>{1, 2, 3, 4, 5});
  CHECK_THROWS_AS(s.apply_action(0), ContractViolation);  // Alice cannot quit
  CHECK_THROWS_AS(s.apply_action(6), ContractViolation);
  CHECK_THROWS_AS(s.legal_actions(PlayerId(SaySelectState::kBob)), ContractViolation);
  s.apply_action(2);
  CHECK(s.legal_actions(PlayerId(SaySelectState::kBob)).size() == 6);
  CHECK_THROWS_AS(s.apply_action(-1), ContractViolation);
  CHECK_THROWS_AS(s.apply_action(6), ContractViolation);
}

TEST_CASE("say-select observation keys cover their ranges") {
  std::set<int> alice, bob;
  for (int mask = 0; mask < 32; ++mask)
    for (int last = -1; last <= 5; ++last) {
      SaySelectState::AliceObservation o{};
      for (int i = 0; i < 5; ++i) o.ball_rewards[i] = mask >> i & 1 ? 1 : -1;
      o.last_bob_action = last;
      alice.insert(SaySelectState::alice_key(o));
    }
  for (int a = 0; a <= 5; ++a)
    for (int b = 0; b <= 5; ++b) bob.insert(SaySelectState::bob_key({a, b}));
  CHECK(alice.size() == SaySelectState::kNumAliceKeys);
  CHECK(*alice.rbegin() == SaySelectState::kNumAliceKeys - 1);
  CHECK(bob.size() == SaySelectState::kNumBobKeys);
  CHECK(*bob.rbegin() == SaySelectState::kNumBobKeys - 1);
}

TEST_CASE("say-select horizon ends the episode") {
  SaySelectState s(EnvConfig::say_select_default(), {1, 1, 1, 1, 1});
  int moves = 0;
  while (!s.is_terminal()) {
    s.apply_action(1);
    ++moves;
  }
  CHECK(moves == 20);
}

TEST_CASE("intuitive pair collects every +1 ball on all 31 subsets") {
  IntuitiveAlice alice;
  IntuitiveBob bob;
  for (int mask = 1; mask < 32; ++mask) {
    std::array<int, 5> balls;
    int k = 0;
    for (int i = 0; i < 5; ++i) {
      balls[i] = mask >> i & 1 ? 1 : -1;
      k += mask >> i & 1;
    }
    SaySelectState s(EnvConfig::say_select_default(), balls);
    Rng rng(0);
    while (!s.is_terminal()) {
      Policy& p = s.current_player() == 0 ? static_cast<Policy&>(alice) : bob;
      s.apply_action(p.decide(s, rng).action);
    }
    CHECK(s.score() == k);
    CHECK(s.quit());
  }
}

TEST_CASE("say-select depletion and blindness over random episodes") {
  UniformRandomPolicy random;
  const EnvConfig config = EnvConfig::say_select_default();
  for (uint64_t seed = 0; seed < 10000; ++seed) {
    auto state = new_initial_state(config, seed);
    auto& s = static_cast<SaySelectState&>(*state);
    Rng rng(seed);
    std::array<int, 5> picks{};
    int positives = s.num_positive();
    while (!s.is_terminal()) {
      const int a = random.decide(s, rng).action;
      const bool bob = s.current_player() == SaySelectState::kBob;
      const int r = s.apply_action(a);
      if (bob && a != SaySelectState::kQuit) {
        if (++picks[a - 1] >= 2) REQUIRE(r == -1);
        REQUIRE(s.ball_rewards()[a - 1] == -1);
      }
      REQUIRE(s.num_positive() <= positives);
      positives = s.num_positive();
      REQUIRE(s.observation_string(SaySelectState::kBob).find_first_of("+-") ==
              std::string::npos);
    }
  }
}

TEST_CASE("bob's observation does not depend on the ball values") {
  SaySelectState a(EnvConfig::say_select_default(), {1, 1, 1, 1, 1});
  SaySelectState b(EnvConfig::say_select_default(), {-1, -1, 1, -1, -1});
  for (int act : {3, 2, 4, 4}) {
    a.apply_action(act);
    b.apply_action(act);
    CHECK(a.observation_string(1) == b.observation_string(1));
  }
}

TEST_CASE("run_episode is deterministic and its return is consistent") {
  UniformRandomPolicy p0, p1;
  for (const EnvConfig& config :
       {EnvConfig::say_select_default(), EnvConfig::hanabi_full(), EnvConfig::hanabi_mini()}) {
    for (uint64_t seed : {1u, 2u, 99u}) {
      const auto t1 = testing::run_pair(config, p0, p1, seed);
      const auto t2 = testing::run_pair(config, p0, p1, seed);
      nlohmann::json j1 = t1, j2 = t2;
      CHECK(j1.dump() == j2.dump());
      CHECK(t1.terminal);
      CHECK(t1.total_return == doctest::Approx(t1.recompute_return()).epsilon(1e-12));
      int sum = 0;
      for (const auto& s : t1.steps) sum += s.reward;
      CHECK(sum == t1.score);
    }
  }
}

TEST_CASE("traces replay and survive json round trips") {
  UniformRandomPolicy p0, p1;
  const auto trace = testing::run_pair(EnvConfig::hanabi_full(), p0, p1, 12);
  nlohmann::json j = trace;
  const EpisodeTrace back = nlohmann::json::parse(j.dump()).get<EpisodeTrace>();
  nlohmann::json j2 = back;
  CHECK(j.dump() == j2.dump());
  auto state = replay_trace(back);
  CHECK(state->is_terminal());
  CHECK(state->score() == trace.score);

  EpisodeTrace tampered = back;
  tampered.steps[3].reward += 1;
  CHECK_THROWS_AS(replay_trace(tampered), ContractViolation);
}

TEST_CASE("random hanabi play scores within bounds") {
  UniformRandomPolicy p0, p1;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const auto t = testing::run_pair(EnvConfig::hanabi_full(), p0, p1, seed);
    CHECK(t.score >= 0);
    CHECK(t.score <= 25);
  }
}

class IllegalPolicy final : public Policy {
 public:
  Decision decide(const State&, Rng&) override { return {-3, {}}; }
  std::string name() const override { return "illegal"; }
};

TEST_CASE("an illegal action aborts the episode with an error trace") {
  UniformRandomPolicy ok;
  IllegalPolicy bad;
  const auto t = testing::run_pair(EnvConfig::say_select_default(), ok, bad, 5);
  REQUIRE(t.error.has_value());
  CHECK(!t.terminal);
  CHECK(t.steps.size() == 2);
  CHECK(t.error->find("illegal") != std::string::npos);
  CHECK_NOTHROW(replay_trace(t));
}

TEST_CASE("run_episode needs one policy per seat") {
  UniformRandomPolicy p;
  Policy* one[] = {&p};
  CHECK_THROWS_AS(run_episode(EnvConfig::say_select_default(), one, 1), ContractViolation);
}

TEST_CASE("rng streams are stable and state round-trips") {
  Rng a(derive_seed(42, streams::kPolicy));
  Rng b(derive_seed(42, streams::kPolicy));
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const std::string saved = a.state();
  const uint64_t next = a.next_u64();
  Rng c;
  c.set_state(saved);
  CHECK(c.next_u64() == next);
  CHECK(derive_seed(42, streams::kPolicy) != derive_seed(42, streams::kEnvironment));
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[a.uniform_int(7)];
  CHECK(testing::chi_square_uniform(counts) < 16.81);  // 6 dof, p = 0.01
}

}  // namespace
}  // namespace instructrl
