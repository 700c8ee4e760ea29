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

#ifndef INSTRUCTRL_CONFIG_H_
#define INSTRUCTRL_CONFIG_H_

#include <string>
#include <vector>

#include "json.hpp"

namespace instructrl {

enum class EnvId { kSaySelect, kHanabi };

std::string to_string(EnvId id);
EnvId env_id_from_string(const std::string& s);

struct SaySelectConfig {
  static constexpr int kNumBalls = 5;
  // When set, the number of +1 balls is drawn from {0..5} instead of {1..5}.
  bool allow_zero_positive = false;
  bool operator==(const SaySelectConfig&) const = default;
};

struct HanabiConfig {
  int num_colors = 5;
  int num_ranks = 5;
  std::vector<int> rank_counts = {3, 2, 2, 2, 1};
  int hand_size = 5;
  int max_hint_tokens = 8;
  int lives = 3;
  // After the last card is drawn each player takes one more turn.
  bool final_round = true;

  int cards_per_color() const;
  int deck_size() const;
  int max_score() const { return num_colors * num_ranks; }
  int num_actions() const { return 2 * hand_size + num_colors + num_ranks; }

  static HanabiConfig full() { return {}; }
  // Two colors, two-card hands, everything else at the defaults.
  static HanabiConfig mini();

  void validate() const;
  bool operator==(const HanabiConfig&) const = default;
};

struct EnvConfig {
  EnvId env_id = EnvId::kSaySelect;
  SaySelectConfig say_select;
  HanabiConfig hanabi;
  int max_steps = 20;
  double gamma = 0.99;

  static EnvConfig say_select_default();
  static EnvConfig hanabi_full();
  static EnvConfig hanabi_mini();

  // Throws ConfigError.
  void validate() const;
  bool operator==(const EnvConfig&) const = default;
};

void to_json(nlohmann::json& j, const HanabiConfig& c);
void from_json(const nlohmann::json& j, HanabiConfig& c);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

}  // namespace instructrl

#endif  // INSTRUCTRL_CONFIG_H_
