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

#include "instructrl/hanabi_features.h"

#include <algorithm>

#include "instructrl/errors.h"

namespace instructrl {

namespace {

struct Writer {
  std::span<float> out;
  size_t pos = 0;
  void put(float x) { out[pos++] = x; }
  void one_hot(int index, int width) {
    for (int i = 0; i < width; ++i) out[pos + i] = i == index ? 1.f : 0.f;
    pos += width;
  }
  void bits(unsigned mask, int width) {
    for (int i = 0; i < width; ++i) out[pos + i] = mask >> i & 1 ? 1.f : 0.f;
    pos += width;
  }
  void zeros(int width) {
    std::fill(out.begin() + pos, out.begin() + pos + width, 0.f);
    pos += width;
  }
};

}  // namespace

HanabiEncoder::HanabiEncoder(const HanabiConfig& config) : config_(config) {
  config_.validate();
  const int C = config_.num_colors, R = config_.num_ranks, H = config_.hand_size;
  // present, color/rank masks, hinted flags, P(playable), P(dead),
  // color and rank marginals
  own_slot_ = 1 + C + R + 2 + 2 + C + R;
  // present, card one-hot, partner's masks, hinted flags, playable, dead
  partner_slot_ = 1 + C * R + C + R + 2 + 2;
  sections_ = {{"own_hand", H * own_slot_},
               {"partner_hand", H * partner_slot_},
               {"fireworks", C * (R + 1)},
               {"hint_tokens", config_.max_hint_tokens + 1},
               {"lives", config_.lives + 1},
               {"deck", 3},
               {"discards", C * R},
               // type, by-partner, position, revealed card, success, hint
               // color, hint rank, touched positions
               {"last_move", 5 + 1 + H + C * R + 1 + C + R + H}};
  size_ = 0;
  for (const auto& s : sections_) size_ += s.second;
}

std::vector<float> HanabiEncoder::encode(const HanabiState& state, int observer) const {
  std::vector<float> out(size_);
  encode(state, observer, out);
  return out;
}

void HanabiEncoder::encode(const HanabiState& state, int observer, std::span<float> out) const {
  if (static_cast<int>(out.size()) != size_) throw ContractViolation("encoder: bad output size");
  if (!(state.hanabi() == config_)) throw ContractViolation("encoder: config mismatch");
  const int C = config_.num_colors, R = config_.num_ranks, H = config_.hand_size;
  const int partner = 1 - observer;
  Writer w{out};

  // Copies of each identity the observer cannot account for.
  int unseen[kMaxColors][kMaxRanks];
  bool dead[kMaxColors][kMaxRanks];
  for (int c = 0; c < C; ++c) {
    bool blocked = false;
    for (int r = 0; r < R; ++r) {
      unseen[c][r] = config_.rank_counts[r] - state.visible_copies(observer, c, r);
      dead[c][r] = r < state.firework(c) || blocked;
      if (r >= state.firework(c) && state.discarded_count(c, r) == config_.rank_counts[r])
        blocked = true;
    }
  }

  for (int i = 0; i < H; ++i) {
    if (i >= state.hand_size(observer)) {
      w.zeros(own_slot_);
      continue;
    }
    const CardKnowledge& k = state.knowledge(observer, i);
    w.put(1.f);
    w.bits(k.color_mask, C);
    w.bits(k.rank_mask, R);
    w.put(k.color_hinted);
    w.put(k.rank_hinted);
    double total = 0, playable = 0, is_dead = 0;
    double color_w[kMaxColors] = {}, rank_w[kMaxRanks] = {};
    for (int c = 0; c < C; ++c) {
      if (!k.color_possible(c)) continue;
      for (int r = 0; r < R; ++r) {
        if (!k.rank_possible(r) || unseen[c][r] <= 0) continue;
        const double n = unseen[c][r];
        total += n;
        if (state.firework(c) == r) playable += n;
        if (dead[c][r]) is_dead += n;
        color_w[c] += n;
        rank_w[r] += n;
      }
    }
    const double inv = total > 0 ? 1.0 / total : 0.0;
    w.put(static_cast<float>(playable * inv));
    w.put(static_cast<float>(is_dead * inv));
    for (int c = 0; c < C; ++c) w.put(static_cast<float>(color_w[c] * inv));
    for (int r = 0; r < R; ++r) w.put(static_cast<float>(rank_w[r] * inv));
  }

  for (int i = 0; i < H; ++i) {
    if (i >= state.hand_size(partner)) {
      w.zeros(partner_slot_);
      continue;
    }
    const Card card = state.card(partner, i);
    const CardKnowledge& k = state.knowledge(partner, i);
    w.put(1.f);
    w.one_hot(card.color * R + card.rank, C * R);
    w.bits(k.color_mask, C);
    w.bits(k.rank_mask, R);
    w.put(k.color_hinted);
    w.put(k.rank_hinted);
    w.put(state.is_playable(card));
    w.put(dead[card.color][card.rank]);
  }

  for (int c = 0; c < C; ++c) w.one_hot(state.firework(c), R + 1);
  w.one_hot(state.hint_tokens(), config_.max_hint_tokens + 1);
  w.one_hot(state.lives(), config_.lives + 1);
  const int deck_size = config_.deck_size();
  w.put(static_cast<float>(state.deck_remaining()) / deck_size);
  w.put(state.deck_remaining() == 0);
  w.put(state.final_round_turns() >= 0);
  for (int c = 0; c < C; ++c)
    for (int r = 0; r < R; ++r)
      w.put(static_cast<float>(state.discarded_count(c, r)) / config_.rank_counts[r]);

  const LastMove& m = state.last_move();
  w.one_hot(static_cast<int>(m.type), 5);
  w.put(m.type != LastMove::Type::kNone && m.player == partner);
  const bool reveals = m.type == LastMove::Type::kPlay || m.type == LastMove::Type::kDiscard;
  w.one_hot(reveals ? m.position : -1, H);
  w.one_hot(reveals ? m.card.color * R + m.card.rank : -1, C * R);
  w.put(m.type == LastMove::Type::kPlay && m.success);
  w.one_hot(m.type == LastMove::Type::kHintColor ? m.hint_value : -1, C);
  w.one_hot(m.type == LastMove::Type::kHintRank ? m.hint_value : -1, R);
  w.bits(m.type == LastMove::Type::kHintColor || m.type == LastMove::Type::kHintRank ? m.touched
                                                                                      : 0u,
         H);
  if (static_cast<int>(w.pos) != size_) throw ContractViolation("encoder: layout drift");
}

}  // namespace instructrl
