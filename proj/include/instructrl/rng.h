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

#ifndef INSTRUCTRL_RNG_H_
#define INSTRUCTRL_RNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>

namespace instructrl {

// Mixes a seed with a stream id. Used to derive independent, reproducible
// sub-streams (per game, per worker, per purpose) from a single user seed.
constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Stream ids used across the project. Changing any of these changes every
// seeded result, so they are fixed.
namespace streams {
inline constexpr uint64_t kEnvironment = 1;
inline constexpr uint64_t kPolicy = 2;
inline constexpr uint64_t kSeatOrder = 3;
inline constexpr uint64_t kInit = 4;
inline constexpr uint64_t kReplay = 5;
inline constexpr uint64_t kCorruption = 6;
inline constexpr uint64_t kGame = 7;
}  // namespace streams

// Seeded generator. The engine is std::mt19937_64, whose output sequence is
// fixed by the C++ standard; the distributions below are implemented here
// (std:: distributions are implementation-defined), so a given seed produces
// the same draws on every platform and compiler.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int uniform_int(int n);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller (one draw per call, two uniforms used).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(items[i], items[j]);
    }
  }

  std::string state() const;
  void set_state(const std::string& s);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace instructrl

#endif  // INSTRUCTRL_RNG_H_
