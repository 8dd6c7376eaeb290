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
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <thread>

#include <doctest.h>

#include "edgeadapt/runtime.hpp"
#include "toy.hpp"

using namespace edgeadapt;
using namespace edgeadapt::testing;

namespace {

struct Rig {
  ToyClassifier model;
  SupernetGraph graph;
  SupernetWeights weights;
  LatencyTable table;
  Dataset data;
  double original = 0.0;
};

const Rig& rig() {
  static const Rig r = [] {
    Rig r;
    r.data = make_blobs(4, 6, 30, 4.0, 1);
    r.model = pretrain_toy(r.data, ToyArchitecture::uniform(6, 8, 12), 3, 0.02, 2);
    r.graph = expand_graph(partition_blocks(r.model.chain_layers(), 1.0), 2,
                           std::vector<double>{0.5, 0.25});
    r.weights = init_supernet_weights(r.model, r.graph, 3, 0.2);
    r.table = nominal_table(make_env(r.graph, "ideal"));
    r.original = subnet_latency(r.table, all_original_subnet(r.graph));
    return r;
  }();
  return r;
}

// Accuracy grows with latency; ties broken by a per-arch wobble.
Evaluator latency_evaluator(const LatencyTable& table, double original) {
  return [&table, original](const std::vector<SubnetEncoding>& cands) {
    std::vector<double> out;
    for (const auto& c : cands) {
      const double wobble =
          static_cast<double>(std::hash<std::string>{}(c.arch()) % 97) / 97.0 * 0.01;
      out.push_back(0.5 + 0.4 * subnet_latency(table, c) / original + wobble);
    }
    return out;
  };
}

SubnetPool search_pool(const Rig& r, double budget, double delta_frac, uint64_t seed) {
  SearchConfig c;
  c.budget_ms = budget;
  c.delta_ms = delta_frac * budget;
  c.search_times = 20;
  c.seed = seed;
  SearchResult s = evolutionary_search(r.graph, r.table, c, latency_evaluator(r.table, r.original));
  return build_pool(s.history, LatencyWindow::around(c.budget_ms, c.delta_ms), budget);
}

class FlakyStore : public WeightStore {
 public:
  FlakyStore(const SupernetWeights& w, VariantKey bad) : inner_(w), bad_(bad) {}
  bool contains(VariantKey key) const override { return inner_.contains(key); }
  BlockParams load(VariantKey key) const override {
    if (key == bad_) throw Error("read failed for " + key.str());
    return inner_.load(key);
  }
  LinearParams head() const override { return inner_.head(); }
  LinearParams tail() const override { return inner_.tail(); }

 private:
  MemoryWeightStore inner_;
  VariantKey bad_;
};

}  // namespace

TEST_CASE("pool: trivial histories") {
  SubnetEncoding a = SubnetEncoding::parse("0:0,1:0");
  SubnetEncoding b = SubnetEncoding::parse("0:1");
  SubnetPool one = build_pool({{0, a, 5.0, 0.7}}, LatencyWindow{}, 10.0);
  REQUIRE(one.entries.size() == 1);
  CHECK(one.entries[0].enc == a);
  CHECK(one.optimal_entry().relative_latency == 1.0);

  SubnetPool same = build_pool({{0, a, 5.0, 0.8}, {0, b, 5.05, 0.9}},
                               LatencyWindow::around(5.0, 1.0), 10.0);
  REQUIRE(same.entries.size() == 1);
  CHECK(same.entries[0].accuracy == 0.9);

  CHECK_THROWS_AS(build_pool({}, LatencyWindow{}, 1.0), Error);
}

TEST_CASE("pool: band maxima match a brute-force scan") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<HistoryRow> history;
    for (int i = 0; i < 500; ++i) {
      HistoryRow h;
      h.enc = SubnetEncoding({{0, i}});  // distinct arch strings
      h.latency = rng.uniform(5.0, 15.0);
      h.accuracy = std::round(rng.uniform(0.5, 0.9) * 200.0) / 200.0;
      history.push_back(h);
    }
    const LatencyWindow w = LatencyWindow::around(10.0, 4.0);
    const double budget = 11.0;
    SubnetPool pool = build_pool(history, w, budget, 10);

    // Scan: band index from the raw formula; best per band by accuracy,
    // then latency, then arch.
    auto better = [](const HistoryRow& x, const HistoryRow& y) {
      if (x.accuracy != y.accuracy) return x.accuracy > y.accuracy;
      if (x.latency != y.latency) return x.latency < y.latency;
      return x.enc.arch() < y.enc.arch();
    };
    std::map<int, HistoryRow> best;
    std::optional<HistoryRow> opt;
    for (const auto& h : history) {
      if (h.latency < 6.0 || h.latency > 14.0) continue;
      int band = static_cast<int>(std::floor((h.latency - 6.0) / 8.0 * 10.0));
      band = std::clamp(band, 0, 9);
      auto it = best.find(band);
      if (it == best.end() || better(h, it->second)) best[band] = h;
      if (h.latency <= budget && (!opt || better(h, *opt))) opt = h;
    }
    std::set<std::string> expected;
    for (const auto& [band, h] : best) expected.insert(h.enc.arch());
    expected.insert(opt->enc.arch());
    std::set<std::string> got;
    for (const auto& e : pool.entries) got.insert(e.enc.arch());
    CHECK(got == expected);
    CHECK(pool.optimal_entry().enc == opt->enc);
    CHECK(std::is_sorted(pool.entries.begin(), pool.entries.end(),
                         [](const PoolEntry& x, const PoolEntry& y) { return x.latency < y.latency; }));
    for (const auto& e : pool.entries) {
      CHECK(e.relative_latency == doctest::Approx(e.latency / opt->latency));
    }
  }
}

TEST_CASE("pool: unbounded window is cut at the largest latency") {
  std::vector<HistoryRow> h;
  for (int i = 0; i < 20; ++i) h.push_back({0, SubnetEncoding({{0, i}}), 1.0 + i, 0.5 + 0.01 * i});
  SubnetPool pool = build_pool(h, LatencyWindow{}, 100.0, 4);
  CHECK(pool.band_hi == 20.0);
  CHECK(pool.entries.size() == 4);
  CHECK(pool.optimal_entry().latency == 20.0);
  CHECK(pool_band(20.0, 0.0, 20.0, 4) == 3);
  CHECK(pool_band(-1.0, 0.0, 20.0, 4) == 0);
}

TEST_CASE("monitor: ratio, budget scaling, keep") {
  PoolEntry active{SubnetEncoding::parse("0:0"), 10.0, 0.9, 1.0};
  SubnetPool pool;
  pool.entries = {active};
  MonitorState s = MonitorState::start(active);
  MonitorAction a = monitor_step(s, 15.0, pool, 20.0);
  CHECK(a.r == 1.5);
  CHECK(a.scaled_budget_ms == doctest::Approx(20.0 / 1.5));
  CHECK(a.kind == MonitorActionKind::kKeep);

  MonitorState flat = MonitorState::start(active);
  for (int i = 0; i < 20; ++i) {
    CHECK(monitor_step(flat, 10.0, pool, 10.0).kind == MonitorActionKind::kKeep);
  }
  CHECK(flat.ratios.size() == 5);
  CHECK(MonitorState::start(active, 5, 0.05, 100.0).cycle_period_ms == 500.0);

  SubnetPool empty;
  CHECK(monitor_step(flat, 10.0, empty, 10.0).kind == MonitorActionKind::kResearch);
}

TEST_CASE("monitor: x2 swaps within one cycle, x3 with no fit researches") {
  const Rig& r = rig();
  const double budget = 0.9 * r.original;
  SubnetPool pool = search_pool(r, budget, 0.7, 1);
  REQUIRE(pool.entries.size() >= 3);
  REQUIRE(pool.entries.front().latency <= budget / 2);

  EnvProfile env = make_env(r.graph, "ideal", 0.0, scenario_timeline("step-x2", 1000, 0));
  MonitorState s = MonitorState::start(pool.optimal_entry(), 5, 0.05, 100.0);
  std::optional<double> swapped_at;
  for (double t = 0; t <= 3000; t += 100) {
    const double obs = simulate_inference(s.active, env, t, 0);
    MonitorAction a = monitor_step(s, obs, pool, budget);
    if (a.kind == MonitorActionKind::kSwap) {
      CHECK_FALSE(swapped_at.has_value());
      swapped_at = t;
      CHECK(a.target.latency * 2.0 <= budget);
      s.activate(a.target);
    }
    CHECK(a.kind != MonitorActionKind::kResearch);
  }
  REQUIRE(swapped_at.has_value());
  CHECK(*swapped_at >= 1000.0);
  CHECK(*swapped_at - 1000.0 <= s.cycle_period_ms);

  SubnetPool tight = search_pool(r, budget, 0.1, 2);
  REQUIRE(tight.entries.front().latency > budget / 3);
  EnvProfile x3 = make_env(r.graph, "ideal", 0.0, scenario_timeline("step-x3", 1000, 0));
  MonitorState s3 = MonitorState::start(tight.optimal_entry(), 5, 0.05, 100.0);
  bool researched = false;
  for (double t = 0; t <= 2000 && !researched; t += 100) {
    MonitorAction a = monitor_step(s3, simulate_inference(s3.active, x3, t, 0), tight, budget);
    CHECK(a.kind != MonitorActionKind::kSwap);
    researched = a.kind == MonitorActionKind::kResearch;
  }
  CHECK(researched);
}

TEST_CASE("swap planning by set difference") {
  std::set<VariantKey> resident = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  LoadDelta same = plan_swap(resident, SubnetEncoding::parse("0:0,1:0,2:0,3:0"));
  CHECK(same.loaded.empty());
  CHECK(same.released.empty());
  LoadDelta disjoint = plan_swap(resident, SubnetEncoding::parse("0:-1,1:-1,2:-1,3:-1"));
  CHECK(disjoint.loaded.size() == 4);
  CHECK(disjoint.released.size() == 4);
  LoadDelta one = plan_swap(resident, SubnetEncoding::parse("0:0,1:0,2:-2,3:0"));
  CHECK(one.loaded == std::vector<VariantKey>{{2, -2}});
  CHECK(one.released == std::vector<VariantKey>{{2, 0}});
}

TEST_CASE("serving model pages blocks and rolls back") {
  const Rig& r = rig();
  MemoryWeightStore store(r.weights);
  SubnetEncoding a = all_original_subnet(r.graph);
  SubnetEncoding b = SubnetEncoding::parse("0:-1,1:1,3:0,4:-2,5:0");
  ServingModel m(store, r.graph, a);
  CHECK(m.resident() == std::set<VariantKey>(a.choices().begin(), a.choices().end()));
  CHECK(m.infer(r.data.x) == subnet_forward(r.weights, a, r.data.x).logits);

  LoadDelta d = m.swap(b);
  CHECK(m.active() == b);
  CHECK(m.resident() == std::set<VariantKey>(b.choices().begin(), b.choices().end()));
  CHECK(d.loaded.size() == 3);
  CHECK(d.released.size() == 4);
  CHECK(m.infer(r.data.x) == subnet_forward(r.weights, b, r.data.x).logits);
  uint64_t full = 0;
  for (VariantKey k : b.choices())
    for (const auto& u : r.weights.at(k)) full += u.param_count();
  CHECK(m.resident_params() == full);
  CHECK(d.peak_resident_params >= full);

  CHECK_THROWS_AS(m.swap(SubnetEncoding::parse("0:0,2:0")), Error);
  CHECK(m.active() == b);

  FlakyStore flaky(r.weights, {2, -1});
  ServingModel f(flaky, r.graph, a);
  const auto before = f.resident();
  const uint64_t params_before = f.resident_params();
  CHECK_THROWS_AS(f.swap(SubnetEncoding::parse("0:-1,1:-1,2:-1,3:0,4:0,5:0")), Error);
  CHECK(f.active() == a);
  CHECK(f.resident() == before);
  CHECK(f.resident_params() == params_before);
  CHECK(f.infer(r.data.x) == subnet_forward(r.weights, a, r.data.x).logits);

  SupernetWeights partial = r.weights;
  partial.blocks.erase({1, 1});
  MemoryWeightStore missing(partial);
  ServingModel g(missing, r.graph, a);
  CHECK_THROWS_WITH_AS(g.swap(b), doctest::Contains("no block 1:1"), Error);
  CHECK(g.active() == a);
}

TEST_CASE("requests see either the old or the new subnet") {
  const Rig& r = rig();
  MemoryWeightStore store(r.weights);
  SubnetEncoding a = all_original_subnet(r.graph);
  SubnetEncoding b = SubnetEncoding::parse("0:2,3:-1,4:1");
  const DenseArray x = r.data.x.slice_rows(0, 4);
  const DenseArray ya = subnet_forward(r.weights, a, x).logits;
  const DenseArray yb = subnet_forward(r.weights, b, x).logits;
  ServingModel m(store, r.graph, a);
  std::atomic<bool> stop{false};
  std::atomic<int> bad{0}, seen{0};
  std::vector<std::thread> readers;
  for (int k = 0; k < 3; ++k) {
    readers.emplace_back([&] {
      while (!stop) {
        DenseArray y = m.infer(x);
        if (!(y == ya) && !(y == yb)) ++bad;
        ++seen;
      }
    });
  }
  for (int i = 0; i < 200; ++i) m.swap(i % 2 ? a : b);
  stop = true;
  for (auto& t : readers) t.join();
  CHECK(bad == 0);
  CHECK(seen > 0);
}

TEST_CASE("serve loop scenarios") {
  const Rig& r = rig();
  const double budget = 0.9 * r.original;
  SubnetPool pool = search_pool(r, budget, 0.7, 4);
  MemoryWeightStore store(r.weights);
  Evaluator ev = latency_evaluator(r.table, r.original);
  ServeConfig cfg;
  cfg.budget_ms = budget;
  cfg.duration_ms = 6000;

  auto run = [&](const std::string& scenario) {
    ServingModel m(store, r.graph, all_original_subnet(r.graph));
    EnvProfile env = make_env(r.graph, "ideal", 0.0, scenario_timeline(scenario, 2000, 4000));
    ServeLog log = serve_loop(env, pool, m, r.graph, r.table, cfg, ev);
    CHECK(m.active().arch() == log.events.back().arch);
    return log;
  };

  ServeLog flat = run("flat");
  CHECK(flat.swaps == 0);
  CHECK(flat.researches == 0);
  CHECK(flat.events.size() == 61);

  ServeLog x2 = run("step-x2");
  CHECK(x2.swaps == 1);
  for (const auto& e : x2.events) {
    if (e.action == "swap") CHECK(e.t_ms - 2000 <= 500);
  }
  CHECK(x2.events.back().projected_ms <= budget);

  ServeLog back = run("step-x2-back");
  std::vector<double> swap_latency;
  for (const auto& e : back.events) {
    if (e.action == "swap") swap_latency.push_back(subnet_latency(r.table, SubnetEncoding::parse(e.arch)));
  }
  REQUIRE(swap_latency.size() == 2);
  CHECK(swap_latency[1] > swap_latency[0]);

  SubnetPool tight = search_pool(r, budget, 0.1, 5);
  ServingModel m3(store, r.graph, all_original_subnet(r.graph));
  EnvProfile env3 = make_env(r.graph, "ideal", 0.0, scenario_timeline("step-x3", 2000, 0));
  ServeLog x3 = serve_loop(env3, tight, m3, r.graph, r.table, cfg, ev);
  CHECK(x3.researches >= 1);
  CHECK(subnet_latency(r.table, m3.active()) * 3.0 <= budget);
  CHECK(x3.events.back().projected_ms <= budget);

  ServeConfig bad = cfg;
  bad.request_interval_ms = 0;
  ServingModel mb(store, r.graph, all_original_subnet(r.graph));
  CHECK_THROWS_AS(serve_loop(make_env(r.graph, "ideal"), pool, mb, r.graph, r.table, bad, ev), Error);
}
