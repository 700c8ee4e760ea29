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

#include <map>
#include <set>

#include "doctest.h"
#include "instructrl/errors.h"
#include "instructrl/hanabi.h"
#include "test_util.h"

namespace instructrl {
namespace {

using HA = HanabiAction;

Card card(char color, int rank) {
  const std::string letters = "RGBYW";
  return {static_cast<int8_t>(letters.find(color)), static_cast<int8_t>(rank - 1)};
}

// Builds a deck whose first cards are `front` (dealt to seat 0, then seat 1)
// followed by the rest of the configured deck in canonical order.
std::vector<Card> deck_with_front(const HanabiConfig& h, const std::vector<Card>& front) {
  std::vector<Card> rest = canonical_deck(h);
  for (const Card& c : front) {
    auto it = std::find(rest.begin(), rest.end(), c);
    REQUIRE(it != rest.end());
    rest.erase(it);
  }
  std::vector<Card> deck = front;
  deck.insert(deck.end(), rest.begin(), rest.end());
  return deck;
}

EnvConfig two_color_config(int hand_size) {
  EnvConfig c = EnvConfig::hanabi_full();
  c.hanabi.num_colors = 2;
  c.hanabi.hand_size = hand_size;
  return c;
}

int act(HanabiState& s, HA a) { return s.apply_action(a.to_id(s.hanabi())); }

std::map<std::pair<int, int>, int> multiset(const std::vector<Card>& cards) {
  std::map<std::pair<int, int>, int> m;
  for (const Card& c : cards) ++m[{c.color, c.rank}];
  return m;
}

// Independent legality rules, computed from the public snapshot.
std::vector<int> reference_legal_actions(const HanabiState& s) {
  const HanabiConfig& h = s.hanabi();
  const nlohmann::json view = s.snapshot(-1);
  const int me = view["current_player"];
  const int tokens = view["hint_tokens"];
  const auto& my_hand = view["hands"][me];
  const auto& partner_hand = view["hands"][1 - me];
  std::vector<int> out;
  for (size_t i = 0; i < my_hand.size(); ++i) out.push_back(static_cast<int>(i));
  if (tokens < h.max_hint_tokens)
    for (size_t i = 0; i < my_hand.size(); ++i) out.push_back(h.hand_size + static_cast<int>(i));
  if (tokens > 0) {
    for (int c = 0; c < h.num_colors; ++c)
      for (const auto& slot : partner_hand)
        if (slot["card"]["color"] == color_name(c)) {
          out.push_back(2 * h.hand_size + c);
          break;
        }
    for (int r = 0; r < h.num_ranks; ++r)
      for (const auto& slot : partner_hand)
        if (slot["card"]["rank"] == r + 1) {
          out.push_back(2 * h.hand_size + h.num_colors + r);
          break;
        }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Counting oracle over the viewer's snapshot.
KnowledgeClass reference_knowledge_class(const HanabiState& s, int player, int position) {
  const HanabiConfig& h = s.hanabi();
  const nlohmann::json view = s.snapshot(player);
  const auto& knowledge = view["hands"][player][position]["knowledge"];
  std::set<int> colors, ranks;
  for (const auto& cname : knowledge["colors"]) {
    for (const auto& rnum : knowledge["ranks"]) {
      int c = 0;
      while (color_name(c) != cname.get<std::string>()) ++c;
      const int r = rnum.get<int>() - 1;
      int seen = 0;
      for (const auto& slot : view["hands"][1 - player])
        seen += slot["card"]["color"] == cname && slot["card"]["rank"] == r + 1;
      for (const auto& d : view["discards"]) seen += d["color"] == cname && d["rank"] == r + 1;
      seen += view["fireworks"][cname.get<std::string>()].get<int>() > r;
      if (seen < h.rank_counts[r]) {
        colors.insert(c);
        ranks.insert(r);
      }
    }
  }
  if (colors.size() == 1 && ranks.size() == 1) return KnowledgeClass::kBoth;
  if (colors.size() == 1) return KnowledgeClass::kOnlyColor;
  if (ranks.size() == 1) return KnowledgeClass::kOnlyRank;
  return KnowledgeClass::kNone;
}

TEST_CASE("full deck deals five cards each and leaves forty") {
  HanabiState s(EnvConfig::hanabi_full(), 3);
  CHECK(s.deck_order().size() == 50);
  CHECK(s.hand_size(0) == 5);
  CHECK(s.hand_size(1) == 5);
  CHECK(s.deck_remaining() == 40);
  CHECK(s.hint_tokens() == 8);
  CHECK(s.lives() == 3);
  CHECK(s.num_distinct_actions() == 20);
}

TEST_CASE("mini config sizes") {
  const HanabiConfig mini = HanabiConfig::mini();
  CHECK(mini.deck_size() == 20);
  CHECK(mini.max_score() == 10);
  CHECK(mini.num_actions() == 2 * 2 + 2 + 5);
  HanabiState s(EnvConfig::hanabi_mini(), 1);
  CHECK(s.deck_remaining() == 16);
}

TEST_CASE("invalid hanabi configs are rejected") {
  EnvConfig c = EnvConfig::hanabi_full();
  c.hanabi.hand_size = 6;
  CHECK_THROWS_AS(HanabiState(c, 1), ConfigError);
  c = EnvConfig::hanabi_full();
  c.hanabi.rank_counts = {3, 2};
  CHECK_THROWS_AS(HanabiState(c, 1), ConfigError);
  c = EnvConfig::hanabi_full();
  CHECK_THROWS_AS(HanabiState(c, std::vector<Card>(50, card('R', 1))), ContractViolation);
}

TEST_CASE("full tokens forbid discards; empty tokens forbid hints") {
  HanabiState s(EnvConfig::hanabi_full(), 11);
  const HanabiConfig& h = s.hanabi();
  for (int a : s.legal_actions()) CHECK(HA::from_id(a, h).type != HA::Type::kDiscard);
  while (s.hint_tokens() > 0) {
    const auto legal = s.legal_actions();
    const auto hint = std::find_if(legal.begin(), legal.end(),
                                   [&](int a) { return HA::from_id(a, h).is_hint(); });
    REQUIRE(hint != legal.end());
    s.apply_action(*hint);
  }
  for (int a : s.legal_actions()) CHECK(!HA::from_id(a, h).is_hint());
  CHECK(s.legal_actions().size() == 10);
}

TEST_CASE("hints must touch a card") {
  const EnvConfig config = EnvConfig::hanabi_full();
  // Seat 1 holds only red cards.
  HanabiState s(config, deck_with_front(config.hanabi,
                                        {card('G', 1), card('B', 1), card('Y', 1), card('W', 1),
                                         card('G', 2), card('R', 1), card('R', 1), card('R', 2),
                                         card('R', 3), card('R', 4)}));
  CHECK(!s.is_legal(HA{HA::Type::kHintColor, 2}.to_id(config.hanabi)));
  CHECK(s.is_legal(HA{HA::Type::kHintColor, 0}.to_id(config.hanabi)));
  CHECK(!s.is_legal(HA{HA::Type::kHintRank, 4}.to_id(config.hanabi)));
  CHECK_THROWS_AS(act(s, HA{HA::Type::kHintColor, 2}), ContractViolation);
}

TEST_CASE("legal actions agree with a reference rule set on random states") {
  UniformRandomPolicy random;
  int checked = 0;
  for (uint64_t seed = 0; checked < 100; ++seed) {
    HanabiState s(seed % 2 ? EnvConfig::hanabi_full() : EnvConfig::hanabi_mini(), seed);
    Rng rng(seed);
    const int stop = rng.uniform_int(30);
    for (int t = 0; t < stop && !s.is_terminal(); ++t) s.apply_action(random.decide(s, rng).action);
    if (s.is_terminal()) continue;
    CHECK(s.legal_actions() == reference_legal_actions(s));
    ++checked;
  }
}

TEST_CASE("playing the next rank scores and advances the firework") {
  const EnvConfig config = EnvConfig::hanabi_full();
  HanabiState s(config, deck_with_front(config.hanabi,
                                        {card('R', 1), card('R', 2), card('G', 1), card('B', 1),
                                         card('Y', 1), card('W', 1), card('W', 1), card('W', 2),
                                         card('W', 3), card('W', 4)}));
  CHECK(act(s, {HA::Type::kPlay, 0}) == 1);
  CHECK(s.firework(0) == 1);
  // Cards shift toward the oldest slot; the new card is at the newest slot.
  CHECK(s.card(0, 0) == card('R', 2));
  CHECK(s.card(0, 4) == s.deck_order()[10]);
  CHECK(s.knowledge(0, 4).color_mask == 0b11111);
  act(s, {HA::Type::kHintColor, 0});
  CHECK(act(s, {HA::Type::kPlay, 0}) == 1);
  CHECK(s.firework(0) == 2);
  CHECK(s.score() == 2);
}

TEST_CASE("a misplay costs a life and goes to the discard pile") {
  const EnvConfig config = EnvConfig::hanabi_full();
  HanabiState s(config, deck_with_front(config.hanabi,
                                        {card('R', 3), card('R', 2), card('G', 1), card('B', 1),
                                         card('Y', 1), card('W', 1), card('W', 1), card('W', 2),
                                         card('W', 3), card('W', 4)}));
  CHECK(act(s, {HA::Type::kPlay, 0}) == 0);
  CHECK(s.lives() == 2);
  CHECK(s.discard_pile() == std::vector<Card>{card('R', 3)});
  CHECK(s.last_move().type == LastMove::Type::kPlay);
  CHECK(!s.last_move().success);
}

TEST_CASE("discard regains a token and completing a suit regains one") {
  const EnvConfig config = EnvConfig::hanabi_full();
  HanabiState s(config, deck_with_front(config.hanabi,
                                        {card('R', 1), card('R', 2), card('R', 3), card('R', 4),
                                         card('R', 5), card('G', 1), card('G', 1), card('G', 2),
                                         card('G', 3), card('G', 4)}));
  act(s, {HA::Type::kHintRank, 0});  // 7 tokens
  act(s, {HA::Type::kHintColor, 0});  // 6 tokens
  for (int i = 0; i < 4; ++i) {
    CHECK(act(s, {HA::Type::kPlay, 0}) == 1);
    const int tokens = s.hint_tokens();
    if (i == 0) {
      act(s, {HA::Type::kDiscard, 4});
      CHECK(s.hint_tokens() == tokens + 1);
    } else {
      act(s, {HA::Type::kHintRank, s.card(0, 0).rank});
    }
  }
  const int before = s.hint_tokens();
  REQUIRE(before < 8);
  CHECK(act(s, {HA::Type::kPlay, 0}) == 1);  // R5
  CHECK(s.firework(0) == 5);
  CHECK(s.hint_tokens() == before + 1);
}

TEST_CASE("three misplays zero the score and rewards still sum to it") {
  // Play to 17 points with full information, then misplay until out of lives.
  const EnvConfig config = EnvConfig::hanabi_full();
  testing::OmniscientHanabiPolicy omni;
  bool done = false;
  for (uint64_t seed = 0; seed < 500 && !done; ++seed) {
    HanabiState s(config, seed);
    Rng rng(seed);
    int total = 0;
    while (!s.is_terminal() && s.score() < 17) total += s.apply_action(omni.decide(s, rng).action);
    if (s.score() != 17 || s.is_terminal()) continue;
    while (!s.is_terminal()) {
      const int me = s.current_player();
      int position = -1;
      for (int i = 0; i < s.hand_size(me); ++i)
        if (!s.is_playable(s.card(me, i))) position = i;
      const int a = position >= 0 ? HA{HA::Type::kPlay, position}.to_id(config.hanabi)
                                  : s.legal_actions().back();
      total += s.apply_action(a);
    }
    if (s.end_reason() != HanabiEndReason::kOutOfLives) continue;
    CHECK(s.score() == 0);
    CHECK(total == 0);
    CHECK(s.lives() == 0);
    done = true;
  }
  CHECK(done);
}

TEST_CASE("some deck admits a perfect 25") {
  testing::OmniscientHanabiPolicy omni;
  bool found = false;
  for (uint64_t seed = 0; seed < 1000 && !found; ++seed) {
    HanabiState s(EnvConfig::hanabi_full(), seed);
    Rng rng(seed);
    int total = 0;
    while (!s.is_terminal()) total += s.apply_action(omni.decide(s, rng).action);
    if (s.score() == 25) {
      CHECK(total == 25);
      CHECK(s.end_reason() == HanabiEndReason::kAllPlayed);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("final round gives each player exactly one more turn") {
  UniformRandomPolicy random;
  int exhausted = 0;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    HanabiState s(EnvConfig::hanabi_mini(), seed);
    Rng rng(seed);
    int moves_after_last_draw = -1;
    while (!s.is_terminal()) {
      const int before = s.deck_remaining();
      s.apply_action(random.decide(s, rng).action);
      if (moves_after_last_draw >= 0) ++moves_after_last_draw;
      if (before > 0 && s.deck_remaining() == 0) moves_after_last_draw = 0;
    }
    if (s.end_reason() == HanabiEndReason::kDeckExhausted) {
      CHECK(moves_after_last_draw == 2);
      ++exhausted;
    }
  }
  CHECK(exhausted > 0);
}

TEST_CASE("without a final round the game ends on the last draw") {
  EnvConfig config = EnvConfig::hanabi_mini();
  config.hanabi.final_round = false;
  UniformRandomPolicy random;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    HanabiState s(config, seed);
    Rng rng(seed);
    while (!s.is_terminal()) s.apply_action(random.decide(s, rng).action);
    if (s.end_reason() == HanabiEndReason::kDeckExhausted) CHECK(s.deck_remaining() == 0);
  }
}

TEST_CASE("card conservation, score identity and hint effects over random play") {
  UniformRandomPolicy random;
  long steps = 0;
  for (uint64_t seed = 0; steps < 100000; ++seed) {
    const EnvConfig config = seed % 3 == 0 ? EnvConfig::hanabi_mini() : EnvConfig::hanabi_full();
    HanabiState s(config, seed);
    const HanabiConfig& h = s.hanabi();
    const auto full = multiset(canonical_deck(h));
    Rng rng(seed);
    int reward_sum = 0, successes = 0;
    std::array<int, kMaxColors> prev_fw{};
    while (!s.is_terminal()) {
      const int a = random.decide(s, rng).action;
      const HA action = HA::from_id(a, h);
      const int target = 1 - s.current_player();
      std::vector<Card> target_hand;
      for (int i = 0; i < s.hand_size(target); ++i) target_hand.push_back(s.card(target, i));
      std::vector<CardKnowledge> before;
      for (int i = 0; i < s.hand_size(target); ++i) before.push_back(s.knowledge(target, i));
      const int r = s.apply_action(a);
      reward_sum += r;
      successes += s.last_move().type == LastMove::Type::kPlay && s.last_move().success;
      ++steps;

      std::vector<Card> all(s.deck_order().end() - s.deck_remaining(), s.deck_order().end());
      for (int p = 0; p < 2; ++p)
        for (int i = 0; i < s.hand_size(p); ++i) all.push_back(s.card(p, i));
      all.insert(all.end(), s.discard_pile().begin(), s.discard_pile().end());
      all.insert(all.end(), s.played_cards().begin(), s.played_cards().end());
      REQUIRE(multiset(all) == full);

      for (int c = 0; c < h.num_colors; ++c) {
        REQUIRE(s.firework(c) >= prev_fw[c]);
        prev_fw[c] = s.firework(c);
      }
      REQUIRE(s.hint_tokens() >= 0);
      REQUIRE(s.hint_tokens() <= h.max_hint_tokens);
      REQUIRE(s.lives() >= 0);

      if (action.is_hint()) {
        const bool is_color = action.type == HA::Type::kHintColor;
        for (size_t i = 0; i < target_hand.size(); ++i) {
          const CardKnowledge& k = s.knowledge(target, static_cast<int>(i));
          const bool hit = is_color ? target_hand[i].color == action.value
                                    : target_hand[i].rank == action.value;
          const uint8_t mask = is_color ? k.color_mask : k.rank_mask;
          if (hit) {
            REQUIRE(mask == (1u << action.value));
            REQUIRE((is_color ? k.color_hinted : k.rank_hinted));
          } else {
            REQUIRE((mask >> action.value & 1) == 0);
            REQUIRE((is_color ? k.color_hinted : k.rank_hinted) ==
                    (is_color ? before[i].color_hinted : before[i].rank_hinted));
          }
        }
      }
    }
    CHECK(reward_sum == s.score());
    if (s.end_reason() == HanabiEndReason::kOutOfLives) CHECK(s.score() == 0);
    else CHECK(s.score() == successes);
    CHECK(s.score() == (s.end_reason() == HanabiEndReason::kOutOfLives ? 0 : s.fireworks_total()));
  }
}

TEST_CASE("card knowledge classes") {
  const EnvConfig config = EnvConfig::hanabi_full();
  HanabiState s(config, deck_with_front(config.hanabi,
                                        {card('R', 3), card('G', 2), card('B', 1), card('Y', 4),
                                         card('W', 5), card('R', 1), card('G', 1), card('B', 2),
                                         card('Y', 3), card('W', 4)}));
  act(s, {HA::Type::kHintRank, 0});
  act(s, {HA::Type::kHintRank, 1});  // seat 1 tells seat 0: G2 is a two
  CHECK(s.card_knowledge_class(0, 1) == KnowledgeClass::kOnlyRank);
  CHECK(s.card_knowledge_class(0, 0) == KnowledgeClass::kNone);
  act(s, {HA::Type::kHintColor, 1});
  act(s, {HA::Type::kHintColor, 1});  // and it is green
  CHECK(s.card_knowledge_class(0, 1) == KnowledgeClass::kBoth);
  act(s, {HA::Type::kHintColor, 4});
  act(s, {HA::Type::kHintColor, 0});  // R3 is red
  CHECK(s.card_knowledge_class(0, 0) == KnowledgeClass::kOnlyColor);
  for (int p = 0; p < 2; ++p)
    for (int i = 0; i < 5; ++i)
      CHECK(s.card_knowledge_class(p, i) == reference_knowledge_class(s, p, i));
}

TEST_CASE("counting visible copies completes a rank hint") {
  // Two colors; every green one is in the partner's hand, so a hinted one
  // must be red.
  const EnvConfig config = two_color_config(5);
  HanabiState s(config, deck_with_front(config.hanabi,
                                        {card('R', 1), card('R', 2), card('R', 3), card('R', 4),
                                         card('R', 5), card('G', 1), card('G', 1), card('G', 1),
                                         card('G', 2), card('G', 3)}));
  act(s, {HA::Type::kHintColor, 1});
  act(s, {HA::Type::kHintRank, 0});
  CHECK(s.knowledge(0, 0).color_mask == 0b11);
  CHECK(s.card_knowledge_class(0, 0) == KnowledgeClass::kBoth);
  CHECK(reference_knowledge_class(s, 0, 0) == KnowledgeClass::kBoth);
}

TEST_CASE("knowledge classes agree with a counting oracle on random states") {
  UniformRandomPolicy random;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    HanabiState s(seed % 2 ? EnvConfig::hanabi_mini() : EnvConfig::hanabi_full(), seed);
    Rng rng(seed);
    while (!s.is_terminal()) {
      for (int p = 0; p < 2; ++p)
        for (int i = 0; i < s.hand_size(p); ++i)
          REQUIRE(s.card_knowledge_class(p, i) == reference_knowledge_class(s, p, i));
      s.apply_action(random.decide(s, rng).action);
    }
  }
}

TEST_CASE("snapshot hides exactly the viewer's own cards") {
  HanabiState s(EnvConfig::hanabi_full(), 21);
  const auto view = s.snapshot(0);
  for (const auto& slot : view["hands"][0]) {
    CHECK(!slot.contains("card"));
    CHECK(slot.contains("knowledge"));
  }
  for (const auto& slot : view["hands"][1]) CHECK(slot.contains("card"));
  CHECK(!view.contains("deck_order"));
  CHECK(s.to_json().contains("deck_order"));
}

TEST_CASE("action ids round trip") {
  for (const HanabiConfig& h : {HanabiConfig::full(), HanabiConfig::mini()})
    for (int a = 0; a < h.num_actions(); ++a) CHECK(HA::from_id(a, h).to_id(h) == a);
  CHECK_THROWS_AS(HA::from_id(20, HanabiConfig::full()), ContractViolation);
}

TEST_CASE("step limit ends hanabi games") {
  EnvConfig config = EnvConfig::hanabi_full();
  config.max_steps = 7;
  HanabiState s(config, 4);
  UniformRandomPolicy random;
  Rng rng(1);
  while (!s.is_terminal()) s.apply_action(random.decide(s, rng).action);
  CHECK(s.move_number() <= 7);
}

}  // namespace
}  // namespace instructrl
