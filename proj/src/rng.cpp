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

#include "edgeadapt/rng.hpp"

#include <cmath>

namespace edgeadapt {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

uint64_t Rng::derive(uint64_t seed, std::string_view name) {
  return splitmix64(splitmix64(seed) ^ fnv1a(name));
}

uint64_t Rng::derive(uint64_t seed, uint64_t index) {
  return splitmix64(splitmix64(seed) + splitmix64(index ^ 0x5bd1e995ULL));
}

Rng Rng::stream(uint64_t seed, std::string_view name) {
  return Rng(derive(seed, name));
}

double Rng::log_gamma(double shape) {
  if (shape >= 1.0) {
    return std::log(std::gamma_distribution<double>(shape, 1.0)(engine_));
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space.
  double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(engine_);
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return std::log(g) + std::log(u) / shape;
}

}  // namespace edgeadapt
