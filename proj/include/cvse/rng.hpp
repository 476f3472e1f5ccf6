// Copyright 2026 The cvse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CVSE_RNG_HPP_
#define CVSE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "cvse/error.hpp"

namespace cvse {

// Deterministic 64-bit-state generator (SplitMix64 core). The same seed
// yields the same stream everywhere; substreams come from split().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1), 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("next_uniform: empty range");
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller; consumes two uniform draws, keeps no
  // extra state so the generator stays a single 64-bit word.
  double next_normal() {
    double u1 = 1.0 - next_double();  // (0, 1], log is safe
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw ConfigError("next_below: bound must be positive");
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Independent substream; does not advance this generator.
  Rng split(std::uint64_t stream) const {
    return Rng(mix(mix(state_ + 0x632BE59BD9B4E019ULL) ^ mix(stream + 0xD1B54A32D192ED03ULL)));
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
};

}  // namespace cvse

#endif  // CVSE_RNG_HPP_
