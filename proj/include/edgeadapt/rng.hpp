// Copyright 2026 The edgeadapt Authors.
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

#ifndef EDGEADAPT_RNG_HPP_
#define EDGEADAPT_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace edgeadapt {

/// Seeded random source. Every randomized routine takes one of these (or a
/// seed) explicitly; there is no global generator.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  /// Independent sub-stream derived from a root seed and a name such as
  /// "init" or "mutate". Same (seed, name) always yields the same stream.
  static Rng stream(uint64_t seed, std::string_view name);
  static uint64_t derive(uint64_t seed, std::string_view name);
  static uint64_t derive(uint64_t seed, uint64_t index);

  uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Uniform integer in [0, n). n must be positive.
  size_t below(size_t n) {
    return std::uniform_int_distribution<size_t>(0, n - 1)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// log of a Gamma(shape, 1) draw. Stays finite for very small shapes,
  /// where the draw itself underflows to zero.
  double log_gamma(double shape);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace edgeadapt

#endif  // EDGEADAPT_RNG_HPP_
