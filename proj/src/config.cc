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

#include "instructrl/config.h"

#include <numeric>

#include "instructrl/errors.h"

namespace instructrl {

std::string to_string(EnvId id) {
  return id == EnvId::kSaySelect ? "say_select" : "hanabi";
}

EnvId env_id_from_string(const std::string& s) {
  if (s == "say_select") return EnvId::kSaySelect;
  if (s == "hanabi") return EnvId::kHanabi;
  throw ConfigError("unknown env_id '" + s + "'");
}

int HanabiConfig::cards_per_color() const {
  return std::accumulate(rank_counts.begin(), rank_counts.end(), 0);
}

int HanabiConfig::deck_size() const { return num_colors * cards_per_color(); }

HanabiConfig HanabiConfig::mini() {
  HanabiConfig c;
  c.num_colors = 2;
  c.hand_size = 2;
  return c;
}

void HanabiConfig::validate() const {
  if (num_colors < 1 || num_colors > 5)
    throw ConfigError("hanabi: num_colors must be in [1, 5]");
  if (num_ranks < 1 || num_ranks > 5)
    throw ConfigError("hanabi: num_ranks must be in [1, 5]");
  if (static_cast<int>(rank_counts.size()) != num_ranks)
    throw ConfigError("hanabi: rank_counts must have num_ranks entries");
  for (int c : rank_counts)
    if (c < 1) throw ConfigError("hanabi: every rank needs at least one copy");
  if (hand_size < 1 || hand_size > 5)
    throw ConfigError("hanabi: hand_size must be in [1, 5]");
  if (max_hint_tokens < 0) throw ConfigError("hanabi: max_hint_tokens < 0");
  if (lives < 1) throw ConfigError("hanabi: lives must be >= 1");
  if (deck_size() < 2 * hand_size)
    throw ConfigError("hanabi: deck too small to deal both hands");
}

EnvConfig EnvConfig::say_select_default() { return {}; }

EnvConfig EnvConfig::hanabi_full() {
  EnvConfig c;
  c.env_id = EnvId::kHanabi;
  c.hanabi = HanabiConfig::full();
  c.max_steps = 1000;
  return c;
}

EnvConfig EnvConfig::hanabi_mini() {
  EnvConfig c = hanabi_full();
  c.hanabi = HanabiConfig::mini();
  return c;
}

void EnvConfig::validate() const {
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (env_id == EnvId::kHanabi) hanabi.validate();
}

void to_json(nlohmann::json& j, const HanabiConfig& c) {
  j = {{"num_colors", c.num_colors},       {"num_ranks", c.num_ranks},
       {"rank_counts", c.rank_counts},     {"hand_size", c.hand_size},
       {"max_hint_tokens", c.max_hint_tokens}, {"lives", c.lives},
       {"final_round", c.final_round}};
}

void from_json(const nlohmann::json& j, HanabiConfig& c) {
  HanabiConfig d;
  if (j.is_string()) {
    const auto preset = j.get<std::string>();
    if (preset == "full") d = HanabiConfig::full();
    else if (preset == "mini") d = HanabiConfig::mini();
    else throw ConfigError("unknown hanabi preset '" + preset + "'");
    c = d;
    return;
  }
  if (j.contains("preset")) from_json(j.at("preset"), d);
  c.num_colors = j.value("num_colors", d.num_colors);
  c.num_ranks = j.value("num_ranks", d.num_ranks);
  c.rank_counts = j.value("rank_counts", d.rank_counts);
  c.hand_size = j.value("hand_size", d.hand_size);
  c.max_hint_tokens = j.value("max_hint_tokens", d.max_hint_tokens);
  c.lives = j.value("lives", d.lives);
  c.final_round = j.value("final_round", d.final_round);
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = {{"env_id", to_string(c.env_id)}, {"max_steps", c.max_steps}, {"gamma", c.gamma}};
  if (c.env_id == EnvId::kHanabi) {
    j["hanabi"] = c.hanabi;
  } else {
    j["say_select"] = {{"allow_zero_positive", c.say_select.allow_zero_positive}};
  }
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  const EnvId id = env_id_from_string(j.at("env_id").get<std::string>());
  c = id == EnvId::kHanabi ? EnvConfig::hanabi_full() : EnvConfig::say_select_default();
  if (id == EnvId::kHanabi && j.contains("hanabi")) c.hanabi = j.at("hanabi").get<HanabiConfig>();
  if (id == EnvId::kSaySelect && j.contains("say_select"))
    c.say_select.allow_zero_positive =
        j.at("say_select").value("allow_zero_positive", false);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.gamma = j.value("gamma", c.gamma);
}

}  // namespace instructrl
