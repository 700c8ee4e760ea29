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

#include "instructrl/rng.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "instructrl/errors.h"

namespace instructrl {

int Rng::uniform_int(int n) {
  if (n <= 0) throw ContractViolation("Rng::uniform_int: n must be positive");
  const uint64_t range = static_cast<uint64_t>(n);
  // Largest multiple of range that fits in 2^64.
  const uint64_t limit = std::numeric_limits<uint64_t>::max() -
                         (std::numeric_limits<uint64_t>::max() % range + 1) % range;
  uint64_t x = next_u64();
  while (x > limit) x = next_u64();
  return static_cast<int>(x % range);
}

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (!is) throw ConfigError("Rng::set_state: malformed generator state");
}

}  // namespace instructrl
