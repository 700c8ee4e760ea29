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

// Fixed-width observation features for the Hanabi networks. Everything is
// computed from what the observer can see; their own card identities never
// enter.

#ifndef INSTRUCTRL_HANABI_FEATURES_H_
#define INSTRUCTRL_HANABI_FEATURES_H_

#include <span>
#include <string>
#include <vector>

#include "instructrl/hanabi.h"

namespace instructrl {

class HanabiEncoder {
 public:
  HanabiEncoder() = default;
  explicit HanabiEncoder(const HanabiConfig& config);

  const HanabiConfig& config() const { return config_; }
  int size() const { return size_; }
  // Layout as (section name, width) pairs, in order.
  const std::vector<std::pair<std::string, int>>& sections() const { return sections_; }

  // Writes size() values into out.
  void encode(const HanabiState& state, int observer, std::span<float> out) const;
  std::vector<float> encode(const HanabiState& state, int observer) const;

 private:
  HanabiConfig config_;
  int own_slot_ = 0, partner_slot_ = 0;
  int size_ = 0;
  std::vector<std::pair<std::string, int>> sections_;
};

}  // namespace instructrl

#endif  // INSTRUCTRL_HANABI_FEATURES_H_
