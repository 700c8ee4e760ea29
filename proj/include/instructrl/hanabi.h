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

// Two-player Hanabi.
//
// Rules implemented here:
//  * Deck: num_colors suits, rank r has rank_counts[r] copies per suit.
//  * Hands are ordered oldest first (position 0, letter 'A'); a drawn card
//    enters at the newest position, remaining cards shift toward position 0.
//  * Hinting costs one token and must touch at least one card. Discarding
//    regains one token and is illegal at max tokens. Completing a suit (playing
//    its top rank) regains one token when below max.
//  * A misplay costs a life and discards the card. Losing the last life ends
//    the game with score 0: the step emits -(points so far) so rewards always
//    sum to the official score.
//  * With final_round set, once the last card is drawn each player takes
//    exactly one more turn. Otherwise the game ends when the deck runs out.
//  * Playing every card of every suit ends the game.
//
// Colors are ordered red, green, blue, yellow, white.

#ifndef INSTRUCTRL_HANABI_H_
#define INSTRUCTRL_HANABI_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "instructrl/game.h"

namespace instructrl {

inline constexpr int kMaxColors = 5;
inline constexpr int kMaxRanks = 5;
inline constexpr int kMaxHandSize = 5;

char color_letter(int color);           // 'R', 'G', 'B', 'Y', 'W'
const std::string& color_name(int color);  // "red", ...
const std::string& rank_word(int rank);    // 0 -> "one", ...
char position_letter(int position);     // 0 -> 'A'

struct Card {
  int8_t color = -1;
  int8_t rank = -1;  // 0-based; printed as rank + 1
  bool valid() const { return color >= 0; }
  bool operator==(const Card&) const = default;
  std::string to_string() const;  // e.g. "R3"
};

// What a player knows about one card in their own hand.
struct CardKnowledge {
  uint8_t color_mask = 0;  // bit c set: color c still possible
  uint8_t rank_mask = 0;
  bool color_hinted = false;
  bool rank_hinted = false;

  bool color_possible(int c) const { return color_mask >> c & 1; }
  bool rank_possible(int r) const { return rank_mask >> r & 1; }
  bool operator==(const CardKnowledge&) const = default;
};

struct HanabiAction {
  enum class Type : uint8_t { kPlay, kDiscard, kHintColor, kHintRank };
  Type type = Type::kPlay;
  int value = 0;  // position, color or rank

  static HanabiAction from_id(int id, const HanabiConfig& config);
  int to_id(const HanabiConfig& config) const;
  bool is_hint() const { return type == Type::kHintColor || type == Type::kHintRank; }
  std::string to_string() const;  // "P0", "D1", "CR", "R3" style
  bool operator==(const HanabiAction&) const = default;
};

// The most recent move, as every player saw it.
struct LastMove {
  enum class Type : uint8_t { kNone, kPlay, kDiscard, kHintColor, kHintRank };
  Type type = Type::kNone;
  int player = -1;     // actor
  int position = -1;   // play/discard: position in the actor's hand
  Card card;           // play/discard: the revealed card
  bool success = false;  // play: did it land on the fireworks
  int hint_value = -1;   // color or rank
  uint8_t touched = 0;   // hint: bitmask of positions in the target's hand
};

enum class HanabiEndReason { kNotOver, kOutOfLives, kDeckExhausted, kAllPlayed, kMaxSteps };
std::string to_string(HanabiEndReason reason);

enum class KnowledgeClass { kOnlyColor, kOnlyRank, kBoth, kNone };
std::string to_string(KnowledgeClass k);

class HanabiState final : public State {
 public:
  // Shuffles the full deck with the environment stream of `seed` (one
  // Fisher-Yates pass), then deals hand_size cards to seat 0, then seat 1.
  HanabiState(const EnvConfig& config, uint64_t seed);
  // Explicit deck order, dealt from the front. Must be a permutation of the
  // configured deck.
  HanabiState(const EnvConfig& config, std::vector<Card> deck);

  EnvId env_id() const override { return EnvId::kHanabi; }
  const EnvConfig& config() const override { return config_; }
  const HanabiConfig& hanabi() const { return config_.hanabi; }
  int num_distinct_actions() const override { return config_.hanabi.num_actions(); }
  int current_player() const override { return current_; }
  bool is_terminal() const override { return end_reason_ != HanabiEndReason::kNotOver; }
  int move_number() const override { return moves_; }
  int score() const override { return score_; }
  using State::legal_actions;
  std::vector<int> legal_actions() const override;
  int apply_action(int action) override;
  std::string observation_string(int player) const override;
  std::string action_to_string(int action) const override;
  nlohmann::json to_json() const override;
  std::unique_ptr<State> clone() const override;

  // Fills `mask` (size num_actions) with 1 for legal actions.
  void legal_mask(std::span<uint8_t> mask) const;
  bool is_legal_action(const HanabiAction& a) const;

  // Accessors.
  int hand_size(int player) const { return hand_counts_[player]; }
  Card card(int player, int position) const { return hands_[player][position]; }
  const CardKnowledge& knowledge(int player, int position) const {
    return knowledge_[player][position];
  }
  int firework(int color) const { return fireworks_[color]; }
  int fireworks_total() const;
  int hint_tokens() const { return hint_tokens_; }
  int lives() const { return lives_; }
  int deck_remaining() const { return static_cast<int>(deck_.size()) - deck_pos_; }
  const std::vector<Card>& deck_order() const { return deck_; }
  const std::vector<Card>& discard_pile() const { return discards_; }
  const std::vector<Card>& played_cards() const { return played_; }
  int discarded_count(int color, int rank) const { return discard_counts_[color][rank]; }
  const LastMove& last_move() const { return last_move_; }
  HanabiEndReason end_reason() const { return end_reason_; }
  // -1 when no final round is running, else turns left.
  int final_round_turns() const { return final_turns_; }
  bool is_playable(Card c) const { return fireworks_[c.color] == c.rank; }

  // Classifies what `player` knows about their own card at `position`,
  // combining hint masks with copies visible to them (partner's hand,
  // discards, fireworks).
  KnowledgeClass card_knowledge_class(int player, int position) const;
  // Possible identities of the card, after removing exhausted ones.
  // possible[c][r] set when (c, r) can still be the card.
  std::array<std::array<bool, kMaxRanks>, kMaxColors> possible_identities(int player,
                                                                         int position) const;
  // Copies of (color, rank) that `player` can see outside their own hand.
  int visible_copies(int player, int color, int rank) const;

  // Game document; with `viewer` >= 0 the viewer's own card identities are
  // omitted (their knowledge is kept).
  nlohmann::json snapshot(int viewer) const;

 private:
  void deal();
  void draw(int player);
  void remove_card(int player, int position);
  void end_turn(bool drew_last_card);

  EnvConfig config_;
  std::vector<Card> deck_;
  int deck_pos_ = 0;
  std::array<std::array<Card, kMaxHandSize>, kNumPlayers> hands_{};
  std::array<std::array<CardKnowledge, kMaxHandSize>, kNumPlayers> knowledge_{};
  std::array<int, kNumPlayers> hand_counts_{};
  std::array<int, kMaxColors> fireworks_{};
  std::vector<Card> discards_;
  std::vector<Card> played_;
  std::array<std::array<int, kMaxRanks>, kMaxColors> discard_counts_{};
  int hint_tokens_ = 0;
  int lives_ = 0;
  int current_ = 0;
  int moves_ = 0;
  int score_ = 0;
  int final_turns_ = -1;
  LastMove last_move_;
  HanabiEndReason end_reason_ = HanabiEndReason::kNotOver;
};

// Full deck in canonical order (color-major, then rank, then copy).
std::vector<Card> canonical_deck(const HanabiConfig& config);

}  // namespace instructrl

#endif  // INSTRUCTRL_HANABI_H_
