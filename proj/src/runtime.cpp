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

#include "edgeadapt/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <unordered_set>

namespace edgeadapt {
namespace {

Candidate as_candidate(const PoolEntry& e) { return {e.enc, e.latency, e.accuracy}; }

bool better_entry(const PoolEntry& a, const PoolEntry& b) {
  return better_candidate(as_candidate(a), as_candidate(b));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

uint64_t block_params(const BlockParams& units) {
  uint64_t n = 0;
  for (const auto& u : units) n += u.param_count();
  return n;
}

}  // namespace

size_t pool_band(double latency, double lo, double hi, size_t levels) {
  if (!(hi > lo) || levels <= 1) return 0;
  const double pos = (latency - lo) / (hi - lo) * static_cast<double>(levels);
  if (!(pos > 0.0)) return 0;
  return std::min(levels - 1, static_cast<size_t>(pos));
}

SubnetPool build_pool(const std::vector<HistoryRow>& history, const LatencyWindow& window,
                      double budget_ms, size_t levels) {
  if (history.empty()) throw Error("build_pool: empty search history");
  if (levels == 0) throw Error("build_pool: need at least one latency level");
  SubnetPool pool;
  pool.window = window;
  pool.budget_ms = budget_ms;
  pool.levels = levels;

  std::vector<PoolEntry> rows;
  std::unordered_set<std::string> seen;
  for (const HistoryRow& h : history) {
    if (!window.contains(h.latency) || !seen.insert(h.enc.arch()).second) continue;
    rows.push_back({h.enc, h.latency, h.accuracy, 1.0});
  }
  if (rows.empty()) return pool;

  pool.band_lo = window.lo;
  pool.band_hi = window.hi;
  if (!std::isfinite(pool.band_hi)) {
    pool.band_hi = pool.band_lo;
    for (const auto& e : rows) pool.band_hi = std::max(pool.band_hi, e.latency);
  }
  std::vector<std::optional<PoolEntry>> best(levels);
  std::optional<PoolEntry> optimum;
  for (const PoolEntry& e : rows) {
    auto& slot = best[pool_band(e.latency, pool.band_lo, pool.band_hi, levels)];
    if (!slot || better_entry(e, *slot)) slot = e;
    if (e.latency <= budget_ms && (!optimum || better_entry(e, *optimum))) optimum = e;
  }
  for (auto& slot : best) {
    if (slot) pool.entries.push_back(std::move(*slot));
  }
  if (optimum) {
    const std::string arch = optimum->enc.arch();
    if (std::none_of(pool.entries.begin(), pool.entries.end(),
                     [&](const PoolEntry& e) { return e.enc.arch() == arch; })) {
      pool.entries.push_back(*optimum);
    }
  }
  std::sort(pool.entries.begin(), pool.entries.end(), [](const PoolEntry& a, const PoolEntry& b) {
    if (a.latency != b.latency) return a.latency < b.latency;
    return a.enc.arch() < b.enc.arch();
  });
  pool.optimal = 0;
  for (size_t i = 0; i < pool.entries.size(); ++i) {
    if (optimum && pool.entries[i].enc == optimum->enc) pool.optimal = i;
  }
  const double ref = pool.entries[pool.optimal].latency;
  for (auto& e : pool.entries) e.relative_latency = e.latency / ref;
  return pool;
}

MonitorState MonitorState::start(const PoolEntry& entry, size_t observation_window,
                                 double dead_band, double request_interval_ms) {
  MonitorState s;
  s.observation_window = observation_window;
  s.dead_band = dead_band;
  s.cycle_period_ms = static_cast<double>(observation_window) * request_interval_ms;
  s.activate(entry);
  return s;
}

void MonitorState::activate(const PoolEntry& entry) {
  active = entry.enc;
  estimated_ms = entry.latency;
  active_accuracy = entry.accuracy;
}

const char* action_name(MonitorActionKind kind) {
  switch (kind) {
    case MonitorActionKind::kKeep: return "keep";
    case MonitorActionKind::kSwap: return "swap";
    case MonitorActionKind::kResearch: return "research";
  }
  return "?";
}

MonitorAction monitor_step(MonitorState& state, double observed_ms, const SubnetPool& pool,
                           double budget_ms) {
  if (!(observed_ms > 0.0)) throw Error("observed latency must be positive");
  if (!(state.estimated_ms > 0.0)) throw Error("active subnet has no latency estimate");
  state.ratios.push_back(observed_ms / state.estimated_ms);
  while (state.ratios.size() > std::max<size_t>(1, state.observation_window)) state.ratios.pop_front();
  state.r = median({state.ratios.begin(), state.ratios.end()});

  MonitorAction action;
  action.r = state.r;
  action.scaled_budget_ms = budget_ms / state.r;
  if (pool.empty()) {
    action.kind = MonitorActionKind::kResearch;
    return action;
  }
  const PoolEntry* pick = nullptr;
  if (state.estimated_ms * state.r > budget_ms) {
    for (const PoolEntry& e : pool.entries) {
      if (e.latency <= action.scaled_budget_ms && (!pick || better_entry(e, *pick))) pick = &e;
    }
    if (!pick) {
      action.kind = MonitorActionKind::kResearch;
      return action;
    }
  } else {
    // Upward only with headroom, so jitter near the budget cannot oscillate.
    const double limit = (1.0 - state.dead_band) * budget_ms;
    for (const PoolEntry& e : pool.entries) {
      if (e.accuracy > state.active_accuracy && e.latency * state.r <= limit &&
          (!pick || better_entry(e, *pick))) {
        pick = &e;
      }
    }
  }
  if (pick && pick->enc != state.active) {
    action.kind = MonitorActionKind::kSwap;
    action.target = *pick;
  }
  return action;
}

LoadDelta plan_swap(const std::set<VariantKey>& resident, const SubnetEncoding& next) {
  const std::set<VariantKey> wanted(next.choices().begin(), next.choices().end());
  LoadDelta d;
  std::set_difference(wanted.begin(), wanted.end(), resident.begin(), resident.end(),
                      std::back_inserter(d.loaded));
  std::set_difference(resident.begin(), resident.end(), wanted.begin(), wanted.end(),
                      std::back_inserter(d.released));
  return d;
}

ServingModel::ServingModel(const WeightStore& store, const SupernetGraph& graph,
                           const SubnetEncoding& initial)
    : store_(&store), graph_(&graph), head_(store.head()), tail_(store.tail()) {
  if (auto err = validate_subnet(graph, initial)) throw Error("invalid subnet: " + *err);
  for (const VariantKey& key : initial.choices()) blocks_.emplace(key, store.load(key));
  active_ = initial;
}

DenseArray ServingModel::infer(const DenseArray& x) const {
  std::shared_lock lock(mutex_);
  DenseArray f = linear_forward(head_, x, true);
  for (const VariantKey& key : active_.choices()) f = units_forward(blocks_.at(key), f);
  return linear_forward(tail_, f, false);
}

LoadDelta ServingModel::swap(const SubnetEncoding& next) {
  if (auto err = validate_subnet(*graph_, next)) throw Error("invalid subnet: " + *err);
  std::unique_lock lock(mutex_);
  std::set<VariantKey> resident;
  for (const auto& [key, units] : blocks_) resident.insert(key);
  LoadDelta delta = plan_swap(resident, next);
  for (const VariantKey& key : delta.loaded) {
    if (!store_->contains(key)) throw Error("weight store has no block " + key.str());
  }
  delta.peak_resident_params = resident_params_locked();
  std::map<VariantKey, BlockParams> released;
  for (const VariantKey& key : delta.released) {
    auto node = blocks_.extract(key);
    released.insert(std::move(node));
  }
  try {
    for (const VariantKey& key : delta.loaded) {
      blocks_.emplace(key, store_->load(key));
      delta.peak_resident_params = std::max(delta.peak_resident_params, resident_params_locked());
    }
  } catch (...) {
    for (const VariantKey& key : delta.loaded) blocks_.erase(key);
    blocks_.merge(released);
    throw;
  }
  active_ = next;
  return delta;
}

SubnetEncoding ServingModel::active() const {
  std::shared_lock lock(mutex_);
  return active_;
}

std::set<VariantKey> ServingModel::resident() const {
  std::shared_lock lock(mutex_);
  std::set<VariantKey> out;
  for (const auto& [key, units] : blocks_) out.insert(key);
  return out;
}

uint64_t ServingModel::resident_params() const {
  std::shared_lock lock(mutex_);
  return resident_params_locked();
}

uint64_t ServingModel::resident_params_locked() const {
  uint64_t n = 0;
  for (const auto& [key, units] : blocks_) n += block_params(units);
  return n;
}

void ServeConfig::validate() const {
  if (!(budget_ms > 0.0)) throw Error("serve budget must be positive");
  if (!(duration_ms >= 0.0)) throw Error("serve duration must be non-negative");
  if (!(request_interval_ms > 0.0)) throw Error("request interval must be positive");
  if (observation_window == 0) throw Error("observation window must be positive");
  if (!(dead_band >= 0.0 && dead_band < 1.0)) throw Error("dead band must lie in [0, 1)");
  if (research_population < 2) throw Error("research population must be at least 2");
  if (!(research_delta_frac >= 0.0)) throw Error("research window fraction must be non-negative");
}

ServeLog serve_loop(const EnvProfile& env, SubnetPool pool, ServingModel& model,
                    const SupernetGraph& graph, const LatencyTable& table,
                    const ServeConfig& config, const Evaluator& evaluator) {
  config.validate();
  if (pool.empty()) throw Error("serve_loop: empty subnet pool");
  ServeLog log;
  const PoolEntry& first = pool.optimal_entry();
  if (model.active() != first.enc) model.swap(first.enc);
  MonitorState state = MonitorState::start(first, config.observation_window, config.dead_band,
                                           config.request_interval_ms);
  uint64_t request = 0;
  for (double t = 0.0; t <= config.duration_ms; t += config.request_interval_ms, ++request) {
    const double observed =
        simulate_inference(state.active, env, t, Rng::derive(config.seed, request));
    MonitorAction action = monitor_step(state, observed, pool, config.budget_ms);
    if (action.kind == MonitorActionKind::kSwap) {
      model.swap(action.target.enc);
      state.activate(action.target);
      ++log.swaps;
    } else if (action.kind == MonitorActionKind::kResearch) {
      ++log.researches;
      SearchConfig sc;
      sc.budget_ms = action.scaled_budget_ms;
      sc.delta_ms = config.research_delta_frac * sc.budget_ms;
      sc.population = config.research_population;
      sc.search_times = config.research_iterations;
      sc.seed = Rng::derive(config.seed, "research-" + std::to_string(log.researches));
      SearchResult found;
      bool ok = true;
      try {
        found = evolutionary_search(graph, table, sc, evaluator);
      } catch (const Error&) {
        ok = false;  // nothing near the scaled budget; keep serving
      }
      if (ok && found.found) {
        pool = build_pool(found.history, LatencyWindow::around(sc.budget_ms, sc.delta_ms),
                          sc.budget_ms, config.pool_levels);
        const PoolEntry& best = pool.optimal_entry();
        if (best.enc != state.active) model.swap(best.enc);
        state.activate(best);
      }
    }
    ServeEvent ev;
    ev.t_ms = t;
    ev.observed_ms = observed;
    ev.r = state.r;
    ev.action = action_name(action.kind);
    ev.arch = state.active.arch();
    ev.projected_ms = state.estimated_ms * state.r;
    log.events.push_back(std::move(ev));
  }
  log.final_pool = std::move(pool);
  return log;
}

}  // namespace edgeadapt
