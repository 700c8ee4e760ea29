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

#include "instructrl/hanabi.h"

#include <algorithm>
#include <numeric>

#include "instructrl/errors.h"

namespace instructrl {

namespace {

const std::array<std::string, kMaxColors> kColorNames = {"red", "green", "blue", "yellow",
                                                         "white"};
const std::array<std::string, kMaxRanks> kRankWords = {"one", "two", "three", "four", "five"};
constexpr std::array<char, kMaxColors> kColorLetters = {'R', 'G', 'B', 'Y', 'W'};

uint8_t full_mask(int n) { return static_cast<uint8_t>((1u << n) - 1); }

}  // namespace

char color_letter(int color) { return kColorLetters.at(color); }
const std::string& color_name(int color) { return kColorNames.at(color); }
const std::string& rank_word(int rank) { return kRankWords.at(rank); }
char position_letter(int position) { return static_cast<char>('A' + position); }

std::string Card::to_string() const {
  if (!valid()) return "??";
  return std::string(1, color_letter(color)) + std::to_string(rank + 1);
}

HanabiAction HanabiAction::from_id(int id, const HanabiConfig& config) {
  const int h = config.hand_size;
  if (id < 0 || id >= config.num_actions())
    throw ContractViolation("hanabi: action id out of range: " + std::to_string(id));
  if (id < h) return {Type::kPlay, id};
  if (id < 2 * h) return {Type::kDiscard, id - h};
  if (id < 2 * h + config.num_colors) return {Type::kHintColor, id - 2 * h};
  return {Type::kHintRank, id - 2 * h - config.num_colors};
}

int HanabiAction::to_id(const HanabiConfig& config) const {
  const int h = config.hand_size;
  switch (type) {
    case Type::kPlay: return value;
    case Type::kDiscard: return h + value;
    case Type::kHintColor: return 2 * h + value;
    case Type::kHintRank: return 2 * h + config.num_colors + value;
  }
  return -1;
}

std::string HanabiAction::to_string() const {
  switch (type) {
    case Type::kPlay: return "P" + std::to_string(value);
    case Type::kDiscard: return "D" + std::to_string(value);
    case Type::kHintColor: return std::string("C") + color_letter(value);
    case Type::kHintRank: return "R" + std::to_string(value + 1);
  }
  return "?";
}

std::string to_string(HanabiEndReason reason) {
  switch (reason) {
    case HanabiEndReason::kNotOver: return "not_over";
    case HanabiEndReason::kOutOfLives: return "out_of_lives";
    case HanabiEndReason::kDeckExhausted: return "deck_exhausted";
    case HanabiEndReason::kAllPlayed: return "all_played";
    case HanabiEndReason::kMaxSteps: return "max_steps";
  }
  return "?";
}

std::string to_string(KnowledgeClass k) {
  switch (k) {
    case KnowledgeClass::kOnlyColor: return "only_color";
    case KnowledgeClass::kOnlyRank: return "only_rank";
    case KnowledgeClass::kBoth: return "both";
    case KnowledgeClass::kNone: return "none";
  }
  return "?";
}

std::vector<Card> canonical_deck(const HanabiConfig& config) {
  std::vector<Card> deck;
  deck.reserve(config.deck_size());
  for (int c = 0; c < config.num_colors; ++c)
    for (int r = 0; r < config.num_ranks; ++r)
      for (int k = 0; k < config.rank_counts[r]; ++k)
        deck.push_back({static_cast<int8_t>(c), static_cast<int8_t>(r)});
  return deck;
}

HanabiState::HanabiState(const EnvConfig& config, uint64_t seed) : config_(config) {
  if (config_.env_id != EnvId::kHanabi) throw ConfigError("HanabiState needs a hanabi config");
  config_.validate();
  deck_ = canonical_deck(config_.hanabi);
  Rng rng(derive_seed(seed, streams::kEnvironment));
  rng.shuffle(std::span<Card>(deck_));
  deal();
}

HanabiState::HanabiState(const EnvConfig& config, std::vector<Card> deck)
    : config_(config), deck_(std::move(deck)) {
  if (config_.env_id != EnvId::kHanabi) throw ConfigError("HanabiState needs a hanabi config");
  config_.validate();
  auto sorted = deck_;
  auto key = [](Card c) { return c.color * kMaxRanks + c.rank; };
  std::sort(sorted.begin(), sorted.end(), [&](Card a, Card b) { return key(a) < key(b); });
  if (sorted != canonical_deck(config_.hanabi))
    throw ContractViolation("hanabi: deck is not a permutation of the configured deck");
  deal();
}

void HanabiState::deal() {
  hint_tokens_ = config_.hanabi.max_hint_tokens;
  lives_ = config_.hanabi.lives;
  for (int p = 0; p < kNumPlayers; ++p)
    for (int i = 0; i < config_.hanabi.hand_size; ++i) draw(p);
}

void HanabiState::draw(int player) {
  if (deck_pos_ >= static_cast<int>(deck_.size())) return;
  const int slot = hand_counts_[player]++;
  hands_[player][slot] = deck_[deck_pos_++];
  knowledge_[player][slot] = {full_mask(config_.hanabi.num_colors),
                              full_mask(config_.hanabi.num_ranks), false, false};
}

void HanabiState::remove_card(int player, int position) {
  const int n = hand_counts_[player];
  for (int i = position; i + 1 < n; ++i) {
    hands_[player][i] = hands_[player][i + 1];
    knowledge_[player][i] = knowledge_[player][i + 1];
  }
  hands_[player][n - 1] = Card{};
  knowledge_[player][n - 1] = CardKnowledge{};
  --hand_counts_[player];
}

int HanabiState::fireworks_total() const {
  int s = 0;
  for (int c = 0; c < config_.hanabi.num_colors; ++c) s += fireworks_[c];
  return s;
}

bool HanabiState::is_legal_action(const HanabiAction& a) const {
  if (is_terminal()) return false;
  const HanabiConfig& h = config_.hanabi;
  const int partner = 1 - current_;
  switch (a.type) {
    case HanabiAction::Type::kPlay:
      return a.value >= 0 && a.value < hand_counts_[current_];
    case HanabiAction::Type::kDiscard:
      return hint_tokens_ < h.max_hint_tokens && a.value >= 0 &&
             a.value < hand_counts_[current_];
    case HanabiAction::Type::kHintColor:
      if (hint_tokens_ <= 0 || a.value < 0 || a.value >= h.num_colors) return false;
      for (int i = 0; i < hand_counts_[partner]; ++i)
        if (hands_[partner][i].color == a.value) return true;
      return false;
    case HanabiAction::Type::kHintRank:
      if (hint_tokens_ <= 0 || a.value < 0 || a.value >= h.num_ranks) return false;
      for (int i = 0; i < hand_counts_[partner]; ++i)
        if (hands_[partner][i].rank == a.value) return true;
      return false;
  }
  return false;
}

void HanabiState::legal_mask(std::span<uint8_t> mask) const {
  const HanabiConfig& h = config_.hanabi;
  std::fill(mask.begin(), mask.end(), uint8_t{0});
  if (is_terminal()) return;
  const int n = hand_counts_[current_];
  for (int i = 0; i < n; ++i) mask[i] = 1;
  if (hint_tokens_ < h.max_hint_tokens)
    for (int i = 0; i < n; ++i) mask[h.hand_size + i] = 1;
  if (hint_tokens_ > 0) {
    const int partner = 1 - current_;
    for (int i = 0; i < hand_counts_[partner]; ++i) {
      const Card c = hands_[partner][i];
      mask[2 * h.hand_size + c.color] = 1;
      mask[2 * h.hand_size + h.num_colors + c.rank] = 1;
    }
  }
}

std::vector<int> HanabiState::legal_actions() const {
  std::array<uint8_t, 4 * kMaxHandSize> buf{};
  std::span<uint8_t> mask(buf.data(), num_distinct_actions());
  legal_mask(mask);
  std::vector<int> out;
  for (int a = 0; a < num_distinct_actions(); ++a)
    if (mask[a]) out.push_back(a);
  return out;
}

int HanabiState::apply_action(int action) {
  if (is_terminal()) throw ContractViolation("hanabi: game is over");
  const HanabiConfig& h = config_.hanabi;
  const HanabiAction a = HanabiAction::from_id(action, h);
  if (!is_legal_action(a))
    throw ContractViolation("hanabi: illegal action " + a.to_string() + " for player " +
                            std::to_string(current_));
  const int actor = current_;
  const int partner = 1 - actor;
  const bool deck_had_cards = deck_remaining() > 0;
  int reward = 0;
  LastMove move;
  move.player = actor;

  switch (a.type) {
    case HanabiAction::Type::kPlay: {
      const Card c = hands_[actor][a.value];
      move.type = LastMove::Type::kPlay;
      move.position = a.value;
      move.card = c;
      remove_card(actor, a.value);
      if (fireworks_[c.color] == c.rank) {
        ++fireworks_[c.color];
        played_.push_back(c);
        reward = 1;
        move.success = true;
        if (c.rank == h.num_ranks - 1 && hint_tokens_ < h.max_hint_tokens) ++hint_tokens_;
      } else {
        --lives_;
        discards_.push_back(c);
        ++discard_counts_[c.color][c.rank];
      }
      draw(actor);
      break;
    }
    case HanabiAction::Type::kDiscard: {
      const Card c = hands_[actor][a.value];
      move.type = LastMove::Type::kDiscard;
      move.position = a.value;
      move.card = c;
      remove_card(actor, a.value);
      discards_.push_back(c);
      ++discard_counts_[c.color][c.rank];
      ++hint_tokens_;
      draw(actor);
      break;
    }
    case HanabiAction::Type::kHintColor:
    case HanabiAction::Type::kHintRank: {
      const bool is_color = a.type == HanabiAction::Type::kHintColor;
      move.type = is_color ? LastMove::Type::kHintColor : LastMove::Type::kHintRank;
      move.hint_value = a.value;
      const uint8_t bit = static_cast<uint8_t>(1u << a.value);
      for (int i = 0; i < hand_counts_[partner]; ++i) {
        const Card c = hands_[partner][i];
        CardKnowledge& k = knowledge_[partner][i];
        const bool hit = is_color ? c.color == a.value : c.rank == a.value;
        if (hit) move.touched |= static_cast<uint8_t>(1u << i);
        if (is_color) {
          k.color_mask = hit ? bit : static_cast<uint8_t>(k.color_mask & ~bit);
          k.color_hinted |= hit;
        } else {
          k.rank_mask = hit ? bit : static_cast<uint8_t>(k.rank_mask & ~bit);
          k.rank_hinted |= hit;
        }
      }
      --hint_tokens_;
      break;
    }
  }

  last_move_ = move;
  if (lives_ <= 0) {
    reward = -score_;  // misplay earns nothing; cancel every point so far
    score_ = 0;
    end_reason_ = HanabiEndReason::kOutOfLives;
  } else {
    score_ += reward;
  }
  ++moves_;
  current_ = partner;

  if (!is_terminal()) {
    const bool drew_last = deck_had_cards && deck_remaining() == 0;
    end_turn(drew_last);
  }
  return reward;
}

void HanabiState::end_turn(bool drew_last_card) {
  if (fireworks_total() == config_.hanabi.max_score()) {
    end_reason_ = HanabiEndReason::kAllPlayed;
    return;
  }
  if (drew_last_card) {
    if (config_.hanabi.final_round) {
      final_turns_ = kNumPlayers;
    } else {
      end_reason_ = HanabiEndReason::kDeckExhausted;
      return;
    }
  } else if (final_turns_ > 0) {
    if (--final_turns_ == 0) {
      end_reason_ = HanabiEndReason::kDeckExhausted;
      return;
    }
  }
  if (moves_ >= config_.max_steps) end_reason_ = HanabiEndReason::kMaxSteps;
}

int HanabiState::visible_copies(int player, int color, int rank) const {
  int n = discard_counts_[color][rank];
  if (fireworks_[color] > rank) ++n;
  const int partner = 1 - player;
  for (int i = 0; i < hand_counts_[partner]; ++i) {
    const Card c = hands_[partner][i];
    if (c.color == color && c.rank == rank) ++n;
  }
  return n;
}

std::array<std::array<bool, kMaxRanks>, kMaxColors> HanabiState::possible_identities(
    int player, int position) const {
  if (position < 0 || position >= hand_counts_[player])
    throw ContractViolation("hanabi: no card at position " + std::to_string(position));
  const HanabiConfig& h = config_.hanabi;
  const CardKnowledge& k = knowledge_[player][position];
  std::array<std::array<bool, kMaxRanks>, kMaxColors> possible{};
  for (int c = 0; c < h.num_colors; ++c) {
    if (!k.color_possible(c)) continue;
    for (int r = 0; r < h.num_ranks; ++r) {
      if (!k.rank_possible(r)) continue;
      possible[c][r] = visible_copies(player, c, r) < h.rank_counts[r];
    }
  }
  return possible;
}

KnowledgeClass HanabiState::card_knowledge_class(int player, int position) const {
  const auto possible = possible_identities(player, position);
  const HanabiConfig& h = config_.hanabi;
  int color = -1, rank = -1;
  bool color_known = true, rank_known = true, any = false;
  for (int c = 0; c < h.num_colors; ++c) {
    for (int r = 0; r < h.num_ranks; ++r) {
      if (!possible[c][r]) continue;
      any = true;
      if (color == -1) color = c;
      else if (color != c) color_known = false;
      if (rank == -1) rank = r;
      else if (rank != r) rank_known = false;
    }
  }
  if (!any) return KnowledgeClass::kNone;  // unreachable for consistent states
  if (color_known && rank_known) return KnowledgeClass::kBoth;
  if (color_known) return KnowledgeClass::kOnlyColor;
  if (rank_known) return KnowledgeClass::kOnlyRank;
  return KnowledgeClass::kNone;
}

std::string HanabiState::observation_string(int player) const {
  if (player < 0 || player >= kNumPlayers) throw ContractViolation("hanabi: bad player index");
  const HanabiConfig& h = config_.hanabi;
  std::string s = "fw=";
  for (int c = 0; c < h.num_colors; ++c) s += std::to_string(fireworks_[c]);
  s += ";tok=" + std::to_string(hint_tokens_) + ";life=" + std::to_string(lives_) +
       ";deck=" + std::to_string(deck_remaining()) + ";cur=" + std::to_string(current_) +
       ";own=";
  for (int i = 0; i < hand_counts_[player]; ++i) {
    const CardKnowledge& k = knowledge_[player][i];
    s += std::to_string(k.color_mask) + "/" + std::to_string(k.rank_mask) + ",";
  }
  s += ";partner=";
  for (int i = 0; i < hand_counts_[1 - player]; ++i) s += hands_[1 - player][i].to_string();
  s += ";disc=";
  for (const Card& c : discards_) s += c.to_string();
  s += ";last=" + std::to_string(static_cast<int>(last_move_.type)) + ":" +
       std::to_string(last_move_.player) + ":" + std::to_string(last_move_.position) + ":" +
       std::to_string(last_move_.hint_value) + ":" + std::to_string(last_move_.touched);
  return s;
}

std::string HanabiState::action_to_string(int action) const {
  return HanabiAction::from_id(action, config_.hanabi).to_string();
}

nlohmann::json HanabiState::snapshot(int viewer) const {
  const HanabiConfig& h = config_.hanabi;
  using nlohmann::json;
  auto card_json = [](Card c) {
    return json{{"color", color_name(c.color)}, {"rank", c.rank + 1}};
  };
  json hands = json::array();
  for (int p = 0; p < kNumPlayers; ++p) {
    json hand = json::array();
    for (int i = 0; i < hand_counts_[p]; ++i) {
      const CardKnowledge& k = knowledge_[p][i];
      json colors = json::array(), ranks = json::array();
      for (int c = 0; c < h.num_colors; ++c)
        if (k.color_possible(c)) colors.push_back(color_name(c));
      for (int r = 0; r < h.num_ranks; ++r)
        if (k.rank_possible(r)) ranks.push_back(r + 1);
      json slot = {{"position", std::string(1, position_letter(i))},
                   {"knowledge",
                    {{"colors", colors},
                     {"ranks", ranks},
                     {"color_hinted", k.color_hinted},
                     {"rank_hinted", k.rank_hinted}}}};
      if (p != viewer) slot["card"] = card_json(hands_[p][i]);
      hand.push_back(slot);
    }
    hands.push_back(hand);
  }
  json fireworks = json::object();
  for (int c = 0; c < h.num_colors; ++c) fireworks[color_name(c)] = fireworks_[c];
  json discards = json::array();
  for (const Card& c : discards_) discards.push_back(card_json(c));
  json last = {{"type", static_cast<int>(last_move_.type)}, {"player", last_move_.player}};
  json doc = {{"env", "hanabi"},
              {"config", h},
              {"hands", hands},
              {"fireworks", fireworks},
              {"discards", discards},
              {"hint_tokens", hint_tokens_},
              {"lives", lives_},
              {"deck_remaining", deck_remaining()},
              {"current_player", current_},
              {"move_number", moves_},
              {"score", score_},
              {"terminal", is_terminal()},
              {"end_reason", to_string(end_reason_)},
              {"final_round_turns", final_turns_}};
  if (viewer >= 0) doc["viewer"] = viewer;
  return doc;
}

nlohmann::json HanabiState::to_json() const {
  nlohmann::json doc = snapshot(-1);
  nlohmann::json deck = nlohmann::json::array();
  for (const Card& c : deck_) deck.push_back(c.to_string());
  doc["deck_order"] = deck;
  doc["deck_position"] = deck_pos_;
  return doc;
}

std::unique_ptr<State> HanabiState::clone() const {
  return std::make_unique<HanabiState>(*this);
}

}  // namespace instructrl
