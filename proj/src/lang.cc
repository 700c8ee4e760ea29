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

#include "instructrl/lang.h"

#include "instructrl/errors.h"

namespace instructrl {

std::string to_string(TemplateId t) {
  return t == TemplateId::kQaStyle ? "qa_style" : "completion_style";
}

TemplateId template_from_string(const std::string& s) {
  if (s == "qa_style") return TemplateId::kQaStyle;
  if (s == "completion_style") return TemplateId::kCompletionStyle;
  throw ConfigError("unknown template id '" + s + "'");
}

std::optional<HintFocus> Instruction::focus() const {
  if (tag.starts_with("color")) return HintFocus::kColor;
  if (tag.starts_with("rank")) return HintFocus::kRank;
  return std::nullopt;
}

const std::vector<Instruction>& builtin_instructions() {
  static const std::vector<Instruction> kBuiltins = {
      {"say_select", "I should select the same number as my partner",
       TemplateId::kCompletionStyle, "say_select/original"},
      {"color",
       "If my partner tells me the 'color' of some of my cards, I should 'play' those specific "
       "cards. If my partner does something else, e.g. discards their card or tells me the "
       "'rank' of my cards, then I may 'hint color' to my partner",
       TemplateId::kQaStyle, "color/original"},
      {"rank",
       "If my partner tells me the 'rank' of some of my cards, I should 'play' those specific "
       "cards. If my partner does something else, e.g. discards their card or tells me the "
       "'color' of my cards, then I may 'hint rank' to my partner",
       TemplateId::kQaStyle, "rank/original"},
      {"simple_color",
       "If my partner told me the color of some of my cards, I should play those specific "
       "cards. Otherwise, I should hint color to my partner",
       TemplateId::kQaStyle, "color/simple"},
      {"simple_rank",
       "If my partner told me the rank of some of my cards, I should play those specific "
       "cards. Otherwise, I should hint rank to my partner",
       TemplateId::kQaStyle, "rank/simple"},
  };
  return kBuiltins;
}

const Instruction& instruction_by_key(const std::string& key) {
  for (const Instruction& inst : builtin_instructions())
    if (inst.key == key) return inst;
  throw ConfigError("unknown instruction '" + key + "'");
}

namespace {

std::string quoted(int position) { return std::string("'") + position_letter(position) + "'"; }

}  // namespace

std::string describe_hint(bool is_color, int value, uint8_t touched) {
  std::vector<int> positions;
  for (int i = 0; i < kMaxHandSize; ++i)
    if (touched >> i & 1) positions.push_back(i);
  if (positions.empty()) throw ContractViolation("describe_hint: hint touches no card");
  std::string s = "My partner told me that the ";
  s += is_color ? "color" : "rank";
  if (positions.size() == 1) {
    s += " of my card at position " + quoted(positions[0]);
  } else {
    s += " of my cards at positions ";
    for (size_t i = 0; i < positions.size(); ++i) {
      if (i > 0) s += i + 1 == positions.size() ? " and " : ", ";
      s += quoted(positions[i]);
    }
  }
  s += " is ";
  s += is_color ? color_name(value) : rank_word(value);
  return s;
}

std::string describe_hanabi_move(const LastMove& move, int observer) {
  if (move.type == LastMove::Type::kNone || move.player == observer)
    return "My partner did nothing";
  switch (move.type) {
    case LastMove::Type::kPlay:
      return "My partner played their card at position " + quoted(move.position);
    case LastMove::Type::kDiscard:
      return "My partner discarded their card at position " + quoted(move.position);
    case LastMove::Type::kHintColor:
      return describe_hint(true, move.hint_value, move.touched);
    case LastMove::Type::kHintRank:
      return describe_hint(false, move.hint_value, move.touched);
    case LastMove::Type::kNone:
      break;
  }
  return "My partner did nothing";
}

std::string describe_hanabi_observation(const HanabiState& state, int observer) {
  return describe_hanabi_move(state.last_move(), observer);
}

std::string describe_say_select_observation(const SaySelectState& state) {
  const int u = state.alice_one_ago();
  return u == SaySelectState::kNoUtterance ? "none" : std::to_string(u);
}

std::string describe_observation(const State& state, int player) {
  if (state.env_id() == EnvId::kHanabi)
    return describe_hanabi_observation(static_cast<const HanabiState&>(state), player);
  return describe_say_select_observation(static_cast<const SaySelectState&>(state));
}

std::string describe_hanabi_action(const HanabiAction& action) {
  switch (action.type) {
    case HanabiAction::Type::kPlay: return "play my card at position " + quoted(action.value);
    case HanabiAction::Type::kDiscard:
      return "discard my card at position " + quoted(action.value);
    case HanabiAction::Type::kHintColor: return "hint color to my partner";
    case HanabiAction::Type::kHintRank: return "hint rank to my partner";
  }
  return "";
}

std::string describe_say_select_action(int action) {
  if (action < 0 || action > SaySelectState::kNumBalls)
    throw ContractViolation("say_select: action out of range");
  return std::to_string(action);
}

std::string describe_action(EnvId env, const EnvConfig& config, int action) {
  if (env == EnvId::kHanabi)
    return describe_hanabi_action(HanabiAction::from_id(action, config.hanabi));
  return describe_say_select_action(action);
}

std::string build_prompt(const Instruction& instruction, const std::string& observation_text,
                         const std::optional<std::string>& action_text) {
  if (instruction.text.empty()) throw ContractViolation("build_prompt: empty instruction");
  if (instruction.template_id == TemplateId::kQaStyle) {
    if (!action_text)
      throw ContractViolation("build_prompt: qa_style template needs an action text");
    return "Instruction: " + instruction.text + ".\nPreviously: " + observation_text +
           ".\nQuestion: Should I " + *action_text + "?\nAnswer:";
  }
  return instruction.text + ".\nMy partner selected " + observation_text +
         ".\nSo I should select";
}

std::string completion_continuation(const std::string& action_text) { return " " + action_text; }

}  // namespace instructrl
