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

#ifndef EDGEADAPT_RUNTIME_HPP_
#define EDGEADAPT_RUNTIME_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "edgeadapt/engine.hpp"
#include "edgeadapt/graph.hpp"
#include "edgeadapt/latsim.hpp"
#include "edgeadapt/search.hpp"

namespace edgeadapt {

struct PoolEntry {
  SubnetEncoding enc;
  double latency = 0.0;
  double accuracy = 0.0;
  double relative_latency = 1.0;  // latency / optimal entry latency
};

struct SubnetPool {
  std::vector<PoolEntry> entries;  // ascending latency, distinct archs
  LatencyWindow window;
  double budget_ms = 0.0;
  size_t levels = 10;
  double band_lo = 0.0;  // bands split [band_lo, band_hi] evenly
  double band_hi = 0.0;
  size_t optimal = 0;  // index of the in-budget optimum (or cheapest entry)

  bool empty() const { return entries.empty(); }
  const PoolEntry& optimal_entry() const { return entries.at(optimal); }
};

/// Splits the window into `levels` equal latency bands and keeps the best
/// entry of each occupied band, plus the best in-budget entry overall.
/// History rows outside the window are ignored. An unbounded window is cut
/// at the largest in-window latency. Throws on empty history.
SubnetPool build_pool(const std::vector<HistoryRow>& history, const LatencyWindow& window,
                      double budget_ms, size_t levels = 10);

/// Band of `latency` in a pool built over [lo, hi] with `levels` bands.
size_t pool_band(double latency, double lo, double hi, size_t levels);

struct MonitorState {
  SubnetEncoding active;
  double estimated_ms = 0.0;  // table latency of the active subnet
  double active_accuracy = 0.0;
  std::deque<double> ratios;  // recent observed / estimated
  double r = 1.0;
  size_t observation_window = 5;
  double dead_band = 0.05;
  double cycle_period_ms = 500.0;

  static MonitorState start(const PoolEntry& entry, size_t observation_window = 5,
                            double dead_band = 0.05, double request_interval_ms = 100.0);
  void activate(const PoolEntry& entry);
};

enum class MonitorActionKind { kKeep, kSwap, kResearch };
const char* action_name(MonitorActionKind kind);

struct MonitorAction {
  MonitorActionKind kind = MonitorActionKind::kKeep;
  PoolEntry target;  // valid for kSwap
  double r = 1.0;
  double scaled_budget_ms = 0.0;
};

/// Records one observation, updates r (median of the window), and decides.
/// Does not change the active subnet; the caller applies a swap.
MonitorAction monitor_step(MonitorState& state, double observed_ms, const SubnetPool& pool,
                           double budget_ms);

/// Source of block weights for paging.
class WeightStore {
 public:
  virtual ~WeightStore() = default;
  virtual bool contains(VariantKey key) const = 0;
  /// Throws Error if the block is missing or unreadable.
  virtual BlockParams load(VariantKey key) const = 0;
  virtual LinearParams head() const = 0;
  virtual LinearParams tail() const = 0;
};

class MemoryWeightStore : public WeightStore {
 public:
  explicit MemoryWeightStore(SupernetWeights weights) : weights_(std::move(weights)) {}
  bool contains(VariantKey key) const override { return weights_.find(key) != nullptr; }
  BlockParams load(VariantKey key) const override { return weights_.at(key); }
  LinearParams head() const override { return weights_.head; }
  LinearParams tail() const override { return weights_.tail; }

 private:
  SupernetWeights weights_;
};

struct LoadDelta {
  std::vector<VariantKey> loaded;
  std::vector<VariantKey> released;
  uint64_t peak_resident_params = 0;  // blocks only
};

/// Set difference between the resident blocks and those `next` needs.
LoadDelta plan_swap(const std::set<VariantKey>& resident, const SubnetEncoding& next);

/// A served subnet with only its own blocks resident. Requests and swaps
/// are linearizable: a request runs entirely on the old or the new subnet.
class ServingModel {
 public:
  ServingModel(const WeightStore& store, const SupernetGraph& graph, const SubnetEncoding& initial);

  DenseArray infer(const DenseArray& x) const;
  /// Releases blocks the new subnet does not use, then pages in the missing
  /// ones. Throws (leaving the old subnet active) on an invalid arch or a
  /// missing block.
  LoadDelta swap(const SubnetEncoding& next);

  SubnetEncoding active() const;
  std::set<VariantKey> resident() const;
  uint64_t resident_params() const;

 private:
  uint64_t resident_params_locked() const;

  const WeightStore* store_;
  const SupernetGraph* graph_;
  LinearParams head_;
  LinearParams tail_;
  mutable std::shared_mutex mutex_;
  SubnetEncoding active_;
  std::map<VariantKey, BlockParams> blocks_;
};

struct ServeConfig {
  double budget_ms = 0.0;
  double duration_ms = 10000.0;
  double request_interval_ms = 100.0;
  size_t observation_window = 5;
  double dead_band = 0.05;
  size_t pool_levels = 10;
  uint64_t seed = 0;
  // Re-search at the scaled budget.
  size_t research_population = 50;
  int research_iterations = 20;
  double research_delta_frac = 0.7;

  void validate() const;
};

struct ServeEvent {
  double t_ms = 0.0;
  double observed_ms = 0.0;
  double r = 1.0;
  std::string action;  // keep, swap, research
  std::string arch;    // active after the action
  double projected_ms = 0.0;  // table latency of the active subnet times r
};

struct ServeLog {
  std::vector<ServeEvent> events;
  size_t swaps = 0;
  size_t researches = 0;
  SubnetPool final_pool;
};

/// Serves one request per interval: simulated inference, monitor step,
/// then the action. Research runs synchronously with the old subnet active.
ServeLog serve_loop(const EnvProfile& env, SubnetPool pool, ServingModel& model,
                    const SupernetGraph& graph, const LatencyTable& table,
                    const ServeConfig& config, const Evaluator& evaluator);

}  // namespace edgeadapt

#endif  // EDGEADAPT_RUNTIME_HPP_
