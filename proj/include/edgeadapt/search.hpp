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

#ifndef EDGEADAPT_SEARCH_HPP_
#define EDGEADAPT_SEARCH_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "edgeadapt/graph.hpp"
#include "edgeadapt/latsim.hpp"
#include "edgeadapt/rng.hpp"

namespace edgeadapt {

struct SearchConfig {
  double budget_ms = 0.0;
  double delta_ms = 0.0;  // window half-width
  size_t population = 50;
  int search_times = 20;  // generations; ends early after 3 with no new child
  uint64_t seed = 0;
  double keep_fraction = 0.5;
  size_t max_evaluations = 0;  // 0: unlimited
  size_t init_attempts = 0;    // 0: max(2000, 100 * population)
  int mutate_retries = 8;
  // Annealing schedule: T_k = initial_temperature * cooling^k.
  double initial_temperature = 0.05;
  double cooling = 0.97;

  void validate() const;
  size_t effective_init_attempts() const;
};

struct Candidate {
  SubnetEncoding enc;
  double latency = 0.0;
  std::optional<double> accuracy;
};

/// Closed interval [lo, hi] of table latencies.
struct LatencyWindow {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  static LatencyWindow around(double budget_ms, double delta_ms);
  bool contains(double latency) const { return latency >= lo && latency <= hi; }
  /// 0 inside, otherwise the gap to the nearest edge.
  double distance(double latency) const;
};

/// Accuracies for a list of distinct or repeated subnets, in order.
using Evaluator = std::function<std::vector<double>(const std::vector<SubnetEncoding>&)>;

struct HistoryRow {
  int generation = 0;
  SubnetEncoding enc;
  double latency = 0.0;
  double accuracy = 0.0;
};

struct SearchResult {
  Candidate best;
  bool found = false;             // some evaluated subnet was within budget
  std::vector<HistoryRow> history;  // every distinct subnet, in evaluation order
  size_t evaluations = 0;
  std::vector<double> accepted_accuracies;  // annealing chain only
};

/// Every subnet reachable by replacing one branch: re-tiling the span of a
/// single choice, or collapsing a run of choices into the merged variant
/// covering it. Sorted by arch, never contains `enc`.
std::vector<SubnetEncoding> single_branch_replacements(const SupernetGraph& graph,
                                                       const SubnetEncoding& enc);

/// Distinct uniform samples whose latency lies in the window, topped up by
/// window-constrained mutation walks. Returns up to `population` of them.
std::vector<Candidate> nearby_init(const SupernetGraph& graph, const LatencyTable& table,
                                   const SearchConfig& config);

/// A random single-branch replacement; if it leaves the window, the
/// replacement closest to the window instead (random among ties).
SubnetEncoding nearby_mutate(const SubnetEncoding& enc, const SupernetGraph& graph,
                             const LatencyTable& table, const LatencyWindow& window, Rng& rng);

/// Window-guided evolution with elitism.
SearchResult evolutionary_search(const SupernetGraph& graph, const LatencyTable& table,
                                 const SearchConfig& config, const Evaluator& evaluator);

/// Baseline: uniform init over the whole space, unconstrained mutation.
SearchResult plain_evolutionary(const SupernetGraph& graph, const LatencyTable& table,
                                const SearchConfig& config, const Evaluator& evaluator);

/// Single-chain annealing over nearby_mutate moves, search_times steps.
SearchResult simulated_annealing(const SupernetGraph& graph, const LatencyTable& table,
                                 const SearchConfig& config, const Evaluator& evaluator);

/// Evaluates every subnet with latency <= budget. Throws Error when the space
/// exceeds `cap` or nothing fits.
SearchResult exhaustive_oracle(const SupernetGraph& graph, const LatencyTable& table,
                               double budget_ms, const Evaluator& evaluator,
                               size_t cap = 10000);

/// Higher accuracy, then lower latency, then arch. Both must be evaluated.
bool better_candidate(const Candidate& a, const Candidate& b);

/// 1-based position of the first in-budget history row reaching `target`
/// accuracy (within 1e-9), or nullopt.
std::optional<size_t> evaluations_to_reach(const std::vector<HistoryRow>& history,
                                           double budget_ms, double target);

}  // namespace edgeadapt

#endif  // EDGEADAPT_SEARCH_HPP_
