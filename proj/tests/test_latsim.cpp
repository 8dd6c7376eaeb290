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

#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "edgeadapt/latsim.hpp"
#include "toy.hpp"

using namespace edgeadapt;
using edgeadapt::testing::toy_graph;

TEST_CASE("subnet_latency sums entries") {
  LatencyTable t;
  t.entries = {{{0, 0}, 2.0}, {{1, 0}, 3.0}, {{2, 0}, 5.0}, {{0, 2}, 4.5}};
  CHECK(subnet_latency(t, SubnetEncoding::parse("0:0,1:0,2:0")) == 10.0);
  CHECK(subnet_latency(t, SubnetEncoding::parse("0:2")) == 4.5);
  CHECK_THROWS_AS(subnet_latency(t, SubnetEncoding::parse("0:1,2:0")), Error);
}

TEST_CASE("noise-free profiling equals base costs") {
  SupernetGraph g = toy_graph(4, 2, {0.5, 0.25});
  EnvProfile env = make_env(g, "pixel2", 0.0);
  ProfileResult r = profile_blocks(g, env, 9, 1);
  CHECK(r.table.entries == env.base_cost_ms);
  CHECK(r.timings == g.variants().size() * 9);
  CHECK(g.variants().size() == 17);  // 4 original, 8 shrunk, 5 merged
  CHECK(count_subnets(g) == 115);
}

TEST_CASE("table latency equals simulator latency for random subnets") {
  SupernetGraph g = toy_graph(8, 2, {0.5, 0.25});
  EnvProfile env = make_env(g, "huawei-nova4", 0.0);
  LatencyTable table = profile_blocks(g, env, 5, 3).table;
  for (uint64_t s = 0; s < 1000; ++s) {
    SubnetEncoding enc = sample_uniform_subnet(g, s);
    double manual = 0.0;
    for (VariantKey k : enc.choices()) manual += env.base_cost_ms.at(k);
    CHECK(subnet_latency(table, enc) == manual);
    CHECK(simulate_inference(enc, env, 0.0, s) == subnet_latency(table, enc));
  }
}

TEST_CASE("jittered profiling median stays within 3 percent") {
  SupernetGraph g = toy_graph(6, 2, {0.5, 0.25});
  EnvProfile env = make_env(g, "xiaomi12", 0.10);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    LatencyTable t = profile_blocks(g, env, 99, seed).table;
    for (const auto& [key, base] : env.base_cost_ms) {
      CHECK(std::abs(t.at(key) - base) / base <= 0.03);
    }
  }
}

TEST_CASE("scale events") {
  SupernetGraph g = toy_graph(4, 1, {0.5});
  EnvProfile env = make_env(g, "ideal", 0.0, {{10.0, 2.0}});
  SubnetEncoding enc = all_original_subnet(g);
  const double before = simulate_inference(enc, env, 9.0, 1);
  CHECK(simulate_inference(enc, env, 11.0, 2) == 2.0 * before);
  double base = 0.0;
  for (VariantKey k : enc.choices()) base += env.base_cost_ms.at(k);
  CHECK(before == base);
  CHECK(env.scale_at(10.0) == 2.0);
  CHECK(env.scale_at(9.999) == 1.0);

  env.timeline = {{5.0, 2.0}, {5.0, 3.0}};
  CHECK_THROWS_AS(env.validate(), Error);
  env.timeline = {{5.0, 0.0}};
  CHECK_THROWS_AS(env.validate(), Error);
}

TEST_CASE("jitter stays within bounds") {
  SupernetGraph g = toy_graph(5, 2, {0.5, 0.25});
  EnvProfile env = make_env(g, "pixel6pro", 0.2, {{50.0, 1.7}});
  double worst = 0.0;
  for (uint64_t s = 0; s < 5000; ++s) {
    SubnetEncoding enc = sample_uniform_subnet(g, s % 97);
    const double t = static_cast<double>(s % 100);
    const double expected = expected_inference_ms(enc, env, t);
    const double observed = simulate_inference(enc, env, t, s);
    worst = std::max(worst, std::abs(observed - expected) / expected);
  }
  CHECK(worst <= 0.2 + 1e-12);
  CHECK(worst > 0.0);
}

TEST_CASE("scenarios and presets") {
  CHECK(scenario_timeline("flat", 100, 200).empty());
  auto x2 = scenario_timeline("step-x2", 100, 200);
  REQUIRE(x2.size() == 1);
  CHECK(x2[0].scale == 2.0);
  auto back = scenario_timeline("step-x2-back", 100, 200);
  REQUIRE(back.size() == 2);
  CHECK(back[1].scale == 1.0);
  CHECK(scenario_timeline("step-x3", 100, 200)[0].scale == 3.0);
  CHECK_THROWS_AS(scenario_timeline("step-x9", 100, 200), Error);
  CHECK_THROWS_AS(scenario_timeline("step-x2-back", 200, 100), Error);
  CHECK_THROWS_AS(find_device_preset("nokia"), Error);

  SupernetGraph g = toy_graph(3, 1, {});
  CHECK(make_env(g, "huawei-nova4").base_cost_ms.at({0, 0}) >
        make_env(g, "ideal").base_cost_ms.at({0, 0}));
  CHECK(make_env(g, "ideal").noise_fraction == 0.0);
}

TEST_CASE("dirichlet edge datasets") {
  Dataset base = make_blobs(10, 4, 30, 3.0, 1);
  for (uint64_t s = 0; s < 100; ++s) {
    EdgeDataset e = make_edge_dataset(base, 1e6, 50, s);
    for (double p : e.class_proportions) CHECK(std::abs(p - 0.1) <= 0.01 * 0.1);
  }

  int peaked = 0;
  for (uint64_t s = 0; s < 100; ++s) {
    Rng rng(Rng::derive(s, "dirichlet-test"));
    auto p = sample_dirichlet(100, 0.005, rng);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
    if (*std::max_element(p.begin(), p.end()) > 0.5) ++peaked;
  }
  CHECK(peaked >= 90);

  EdgeDataset empty = make_edge_dataset(base, 0.5, 0, 3);
  CHECK(empty.data.size() == 0);
  CHECK(std::accumulate(empty.class_proportions.begin(), empty.class_proportions.end(), 0.0) ==
        doctest::Approx(1.0));

  EdgeDataset skewed = make_edge_dataset(base, 0.5, 400, 4);
  CHECK(skewed.data.size() == 400);
  auto counts = skewed.data.class_counts();
  for (size_t c = 0; c < 10; ++c) {
    CHECK(std::abs(static_cast<double>(counts[c]) - 400 * skewed.class_proportions[c]) <= 1.0);
  }
  CHECK(make_edge_dataset(base, 0.5, 400, 4).data.x == skewed.data.x);
  CHECK_THROWS_AS(make_edge_dataset(base, 0.0, 10, 1), Error);
}

TEST_CASE("table coverage check") {
  SupernetGraph g = toy_graph(3, 1, {0.5});
  LatencyTable t = nominal_table(make_env(g, "ideal"));
  CHECK_NOTHROW(t.check_covers(g));
  t.entries.erase({1, 0});
  CHECK_THROWS_AS(t.check_covers(g), Error);
}
