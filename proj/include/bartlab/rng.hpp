// Copyright 2026 The bartlab Authors
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

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace bartlab {

/// Source of randomness for every stochastic step in the pipeline.
///
/// All derived draws (bounded integers, unit reals, Poisson counts) are
/// defined here in terms of next_u64() rather than through <random>
/// distributions, whose output is implementation-defined. Tests substitute
/// scripted sources by overriding the derived draws directly.
class RandomSource {
 public:
  virtual ~RandomSource() = default;

  virtual std::uint64_t next_u64() = 0;

  /// Uniform integer in [0, n). n must be positive.
  virtual std::uint64_t below(std::uint64_t n);

  /// Uniform real in [0, 1) with 53 random bits.
  virtual double uniform01();

  /// Poisson(lambda) via Knuth's multiplication method.
  virtual std::uint64_t poisson(double lambda);

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }
};

/// SplitMix64 (Steele, Lea, Flood 2014). 64-bit state, splittable by
/// reseeding with mix_seed().
class SplitMix64 final : public RandomSource {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() override;

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from (seed, index). Used so that
/// per-example and per-step randomness never depends on scheduling.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept;

}  // namespace bartlab
