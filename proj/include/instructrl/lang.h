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

// Natural-language side of the prior: instructions, observation and action
// descriptions, and the two prompt templates.

#ifndef INSTRUCTRL_LANG_H_
#define INSTRUCTRL_LANG_H_

#include <optional>
#include <string>
#include <vector>

#include "instructrl/game.h"
#include "instructrl/hanabi.h"
#include "instructrl/say_select.h"

namespace instructrl {

enum class TemplateId { kCompletionStyle, kQaStyle };
std::string to_string(TemplateId t);
TemplateId template_from_string(const std::string& s);

// Which hint type an instruction designates as "play this card".
enum class HintFocus { kColor, kRank };

struct Instruction {
  std::string key;  // registry name, e.g. "color"
  std::string text;
  TemplateId template_id = TemplateId::kQaStyle;
  std::string tag;  // e.g. "color/original"

  // Hint focus of the Hanabi instructions; nullopt for Say-Select.
  std::optional<HintFocus> focus() const;
};

// Built-ins: "say_select", "color", "rank", "simple_color", "simple_rank".
const std::vector<Instruction>& builtin_instructions();
// Throws ConfigError for unknown keys.
const Instruction& instruction_by_key(const std::string& key);

// Partner's last move as seen by `observer`:
//   "My partner did nothing"
//   "My partner played their card at position 'B'"
//   "My partner discarded their card at position 'A'"
//   "My partner told me that the rank of my card at position 'D' is two"
//   "My partner told me that the color of my cards at positions 'A' and 'C' is red"
std::string describe_hanabi_move(const LastMove& move, int observer);
std::string describe_hanabi_observation(const HanabiState& state, int observer);
// Alice's most recent utterance as a digit, "none" before she has spoken.
std::string describe_say_select_observation(const SaySelectState& state);
// Dispatches on the environment; `player` is the observer.
std::string describe_observation(const State& state, int player);

// "play my card at position 'A'", "discard my card at position 'B'",
// "hint color to my partner", "hint rank to my partner".
std::string describe_hanabi_action(const HanabiAction& action);
// "0" for quitting, "1".."5" for picks.
std::string describe_say_select_action(int action);
std::string describe_action(EnvId env, const EnvConfig& config, int action);

// Hint text with an explicit touched set (used to enumerate the domain).
std::string describe_hint(bool is_color, int value, uint8_t touched);

// qa_style:
//   Instruction: {inst}.
//   Previously: {obs}.
//   Question: Should I {act}?
//   Answer:
// completion_style (action ignored):
//   {inst}.
//   My partner selected {obs}.
//   So I should select
// Throws ContractViolation when a qa prompt lacks an action.
std::string build_prompt(const Instruction& instruction, const std::string& observation_text,
                         const std::optional<std::string>& action_text = std::nullopt);

// Continuation scored for a completion-style action: a single space then the
// action text.
std::string completion_continuation(const std::string& action_text);

}  // namespace instructrl

#endif  // INSTRUCTRL_LANG_H_
