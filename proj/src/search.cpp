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

#include "edgeadapt/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace edgeadapt {
namespace {

Candidate make_candidate(const LatencyTable& table, SubnetEncoding enc) {
  Candidate c;
  c.latency = subnet_latency(table, enc);
  c.enc = std::move(enc);
  return c;
}

// In-budget first by accuracy; over-budget after, cheapest first.
bool rank_before(const Candidate& a, const Candidate& b, double budget) {
  const bool ia = a.latency <= budget, ib = b.latency <= budget;
  if (ia != ib) return ia;
  if (ia) return better_candidate(a, b);
  if (a.latency != b.latency) return a.latency < b.latency;
  if (*a.accuracy != *b.accuracy) return *a.accuracy > *b.accuracy;
  return a.enc.arch() < b.enc.arch();
}

// Evaluation bookkeeping shared by the search loops: each arch is evaluated
// once per run and appended to the history in evaluation order.
class Ledger {
 public:
  Ledger(const Evaluator& evaluator, size_t max_evaluations)
      : evaluator_(evaluator), cap_(max_evaluations) {}

  bool seen(const SubnetEncoding& enc) const { return known_.count(enc.arch()) > 0; }
  bool exhausted() const { return cap_ > 0 && result.history.size() >= cap_; }
  size_t remaining() const {
    return cap_ == 0 ? static_cast<size_t>(-1) : cap_ - std::min(cap_, result.history.size());
  }

  /// Fills in accuracies; new archs beyond the evaluation cap are dropped.
  std::vector<Candidate> evaluate(std::vector<Candidate> batch, int generation) {
    std::vector<Candidate> out;
    std::vector<size_t> fresh;
    std::unordered_set<std::string> queued;
    size_t room = remaining();
    for (Candidate& c : batch) {
      const std::string arch = c.enc.arch();
      auto it = known_.find(arch);
      if (it != known_.end()) {
        c.accuracy = result.history[it->second].accuracy;
        out.push_back(std::move(c));
      } else if (queued.count(arch) == 0 && room > 0) {
        queued.insert(arch);
        --room;
        fresh.push_back(out.size());
        out.push_back(std::move(c));
      }
    }
    if (!fresh.empty()) {
      std::vector<SubnetEncoding> encs;
      for (size_t i : fresh) encs.push_back(out[i].enc);
      const std::vector<double> acc = evaluator_(encs);
      if (acc.size() != encs.size()) throw Error("evaluator returned the wrong number of accuracies");
      for (size_t k = 0; k < fresh.size(); ++k) {
        Candidate& c = out[fresh[k]];
        c.accuracy = acc[k];
        known_.emplace(c.enc.arch(), result.history.size());
        result.history.push_back({generation, c.enc, c.latency, acc[k]});
      }
    }
    // Duplicates within the batch collapse onto their first occurrence.
    std::vector<Candidate> unique;
    std::unordered_set<std::string> emitted;
    for (Candidate& c : out) {
      if (c.accuracy && emitted.insert(c.enc.arch()).second) unique.push_back(std::move(c));
    }
    return unique;
  }

  SearchResult finish(double budget) {
    result.evaluations = result.history.size();
    for (const HistoryRow& row : result.history) {
      if (row.latency > budget) continue;
      Candidate c{row.enc, row.latency, row.accuracy};
      if (!result.found || better_candidate(c, result.best)) {
        result.best = std::move(c);
        result.found = true;
      }
    }
    return std::move(result);
  }

  SearchResult result;

 private:
  const Evaluator& evaluator_;
  size_t cap_;
  std::unordered_map<std::string, size_t> known_;
};

using MutateFn = std::function<SubnetEncoding(const SubnetEncoding&, Rng&)>;

SearchResult run_evolution(const SupernetGraph& graph, const LatencyTable& table,
                           const SearchConfig& config, const Evaluator& evaluator,
                           std::vector<Candidate> initial, const MutateFn& mutate) {
  Ledger ledger(evaluator, config.max_evaluations);
  Rng rng = Rng::stream(config.seed, "mutate");
  std::vector<Candidate> population = ledger.evaluate(std::move(initial), 0);
  const auto rank = [&](std::vector<Candidate>& v) {
    std::sort(v.begin(), v.end(), [&](const Candidate& a, const Candidate& b) {
      return rank_before(a, b, config.budget_ms);
    });
  };
  const size_t keep = std::max<size_t>(
      1, static_cast<size_t>(std::ceil(config.keep_fraction * static_cast<double>(config.population))));

  // Stop once mutation keeps landing on evaluated archs: the reachable part
  // of the window is used up and further generations would only spin.
  constexpr int kStallLimit = 3;
  int stalled = 0;
  for (int gen = 1; gen <= config.search_times && !ledger.exhausted() && stalled < kStallLimit;
       ++gen) {
    rank(population);
    if (population.size() > keep) population.resize(keep);
    std::vector<Candidate> children;
    std::unordered_set<std::string> planned;
    for (const Candidate& parent : population) {
      for (int attempt = 0; attempt < config.mutate_retries; ++attempt) {
        SubnetEncoding child = mutate(parent.enc, rng);
        // Later attempts take a second step to escape exhausted neighbourhoods.
        if (attempt >= config.mutate_retries / 2) child = mutate(child, rng);
        if (validate_subnet(graph, child)) throw std::logic_error("mutation produced an invalid subnet");
        if (ledger.seen(child) || planned.count(child.arch())) continue;
        planned.insert(child.arch());
        children.push_back(make_candidate(table, std::move(child)));
        break;
      }
    }
    stalled = children.empty() ? stalled + 1 : 0;
    std::vector<Candidate> evaluated = ledger.evaluate(std::move(children), gen);
    for (Candidate& c : evaluated) population.push_back(std::move(c));
  }
  return ledger.finish(config.budget_ms);
}

}  // namespace

void SearchConfig::validate() const {
  if (!(delta_ms >= 0.0)) throw Error("delta_T must be non-negative");
  if (population < 2) throw Error("population must be at least 2");
  if (search_times < 0) throw Error("search_times must be non-negative");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw Error("keep_fraction must lie in (0, 1]");
  if (mutate_retries < 1) throw Error("mutate_retries must be positive");
  if (!(initial_temperature >= 0.0)) throw Error("initial temperature must be non-negative");
  if (!(cooling > 0.0 && cooling <= 1.0)) throw Error("cooling factor must lie in (0, 1]");
}

size_t SearchConfig::effective_init_attempts() const {
  return init_attempts ? init_attempts : std::max<size_t>(2000, 100 * population);
}

LatencyWindow LatencyWindow::around(double budget_ms, double delta_ms) {
  return {std::max(0.0, budget_ms - delta_ms), budget_ms + delta_ms};
}

double LatencyWindow::distance(double latency) const {
  if (latency < lo) return lo - latency;
  if (latency > hi) return latency - hi;
  return 0.0;
}

bool better_candidate(const Candidate& a, const Candidate& b) {
  if (*a.accuracy != *b.accuracy) return *a.accuracy > *b.accuracy;
  if (a.latency != b.latency) return a.latency < b.latency;
  return a.enc.arch() < b.enc.arch();
}

std::vector<SubnetEncoding> single_branch_replacements(const SupernetGraph& graph,
                                                       const SubnetEncoding& enc) {
  std::set<SubnetEncoding> out;
  const auto& ch = enc.choices();
  const auto splice = [&](size_t first, size_t last, const std::vector<VariantKey>& mid) {
    std::vector<VariantKey> v(ch.begin(), ch.begin() + static_cast<std::ptrdiff_t>(first));
    v.insert(v.end(), mid.begin(), mid.end());
    v.insert(v.end(), ch.begin() + static_cast<std::ptrdiff_t>(last), ch.end());
    return SubnetEncoding(std::move(v));
  };
  for (size_t i = 0; i < ch.size(); ++i) {
    for (const auto& tiling : enumerate_tilings(graph, ch[i].start, ch[i].end())) {
      if (tiling.size() == 1 && tiling[0] == ch[i]) continue;
      out.insert(splice(i, i + 1, tiling));
    }
    for (size_t j = i + 1; j < ch.size(); ++j) {
      const VariantKey merged{ch[i].start, ch[j].end() - ch[i].start - 1};
      if (graph.find(merged)) out.insert(splice(i, j + 1, {merged}));
    }
  }
  out.erase(enc);
  return {out.begin(), out.end()};
}

SubnetEncoding nearby_mutate(const SubnetEncoding& enc, const SupernetGraph& graph,
                             const LatencyTable& table, const LatencyWindow& window, Rng& rng) {
  const std::vector<SubnetEncoding> options = single_branch_replacements(graph, enc);
  if (options.empty()) return enc;
  const SubnetEncoding& pick = options[rng.below(options.size())];
  if (window.contains(subnet_latency(table, pick))) return pick;
  double best = std::numeric_limits<double>::infinity();
  std::vector<size_t> ties;
  for (size_t i = 0; i < options.size(); ++i) {
    const double d = window.distance(subnet_latency(table, options[i]));
    if (d < best) {
      best = d;
      ties.assign(1, i);
    } else if (d == best) {
      ties.push_back(i);
    }
  }
  return options[ties[rng.below(ties.size())]];
}

std::vector<Candidate> nearby_init(const SupernetGraph& graph, const LatencyTable& table,
                                   const SearchConfig& config) {
  config.validate();
  const LatencyWindow window = LatencyWindow::around(config.budget_ms, config.delta_ms);
  Rng rng = Rng::stream(config.seed, "init");
  const UniformSubnetSampler sampler(graph);
  std::vector<Candidate> out;
  std::unordered_set<std::string> taken;
  std::optional<Candidate> closest;
  const size_t attempts = config.effective_init_attempts();
  for (size_t a = 0; a < attempts && out.size() < config.population; ++a) {
    Candidate c = make_candidate(table, sampler.sample(rng));
    if (window.contains(c.latency)) {
      if (taken.insert(c.enc.arch()).second) out.push_back(std::move(c));
    } else if (!closest || window.distance(c.latency) < window.distance(closest->latency)) {
      closest = std::move(c);
    }
  }
  // Thin windows: walk from what we have toward and around the window.
  if (out.size() < config.population) {
    SubnetEncoding walker = out.empty() ? closest->enc : out.back().enc;
    for (size_t step = 0; step < attempts && out.size() < config.population; ++step) {
      walker = nearby_mutate(walker, graph, table, window, rng);
      Candidate c = make_candidate(table, walker);
      if (window.contains(c.latency) && taken.insert(c.enc.arch()).second) out.push_back(std::move(c));
      if (!out.empty() && rng.uniform() < 0.1) walker = out[rng.below(out.size())].enc;
    }
  }
  if (out.empty()) throw Error("empty latency window");
  return out;
}

SearchResult evolutionary_search(const SupernetGraph& graph, const LatencyTable& table,
                                 const SearchConfig& config, const Evaluator& evaluator) {
  config.validate();
  const LatencyWindow window = LatencyWindow::around(config.budget_ms, config.delta_ms);
  return run_evolution(graph, table, config, evaluator, nearby_init(graph, table, config),
                       [&](const SubnetEncoding& enc, Rng& rng) {
                         return nearby_mutate(enc, graph, table, window, rng);
                       });
}

SearchResult plain_evolutionary(const SupernetGraph& graph, const LatencyTable& table,
                                const SearchConfig& config, const Evaluator& evaluator) {
  config.validate();
  Rng rng = Rng::stream(config.seed, "init");
  const UniformSubnetSampler sampler(graph);
  std::vector<Candidate> initial;
  std::unordered_set<std::string> taken;
  const size_t attempts = config.effective_init_attempts();
  for (size_t a = 0; a < attempts && initial.size() < config.population; ++a) {
    SubnetEncoding enc = sampler.sample(rng);
    if (taken.insert(enc.arch()).second) initial.push_back(make_candidate(table, std::move(enc)));
  }
  return run_evolution(graph, table, config, evaluator, std::move(initial),
                       [&](const SubnetEncoding& enc, Rng& r) {
                         const auto options = single_branch_replacements(graph, enc);
                         return options.empty() ? enc : options[r.below(options.size())];
                       });
}

SearchResult simulated_annealing(const SupernetGraph& graph, const LatencyTable& table,
                                 const SearchConfig& config, const Evaluator& evaluator) {
  config.validate();
  const LatencyWindow window = LatencyWindow::around(config.budget_ms, config.delta_ms);
  SearchConfig start_config = config;
  start_config.population = 2;
  Ledger ledger(evaluator, config.max_evaluations);
  Rng rng = Rng::stream(config.seed, "anneal");
  std::vector<Candidate> start = nearby_init(graph, table, start_config);
  start.resize(1);
  std::vector<Candidate> current = ledger.evaluate(std::move(start), 0);
  if (current.empty()) return ledger.finish(config.budget_ms);
  Candidate state = current.front();
  ledger.result.accepted_accuracies.push_back(*state.accuracy);

  double temperature = config.initial_temperature;
  for (int step = 1; step <= config.search_times; ++step, temperature *= config.cooling) {
    Candidate proposal = make_candidate(table, nearby_mutate(state.enc, graph, table, window, rng));
    std::vector<Candidate> got = ledger.evaluate({proposal}, step);
    if (got.empty()) break;  // evaluation cap reached
    proposal = std::move(got.front());
    const double delta = *proposal.accuracy - *state.accuracy;
    const double u = rng.uniform();
    bool accept = delta >= 0.0;
    if (!accept && temperature > 0.0) accept = u < std::exp(delta / temperature);
    if (accept) {
      state = std::move(proposal);
      ledger.result.accepted_accuracies.push_back(*state.accuracy);
    }
  }
  return ledger.finish(config.budget_ms);
}

SearchResult exhaustive_oracle(const SupernetGraph& graph, const LatencyTable& table,
                               double budget_ms, const Evaluator& evaluator, size_t cap) {
  std::vector<Candidate> feasible;
  for (SubnetEncoding& enc : enumerate_subnets(graph, cap)) {
    Candidate c = make_candidate(table, std::move(enc));
    if (c.latency <= budget_ms) feasible.push_back(std::move(c));
  }
  if (feasible.empty()) throw Error("no subnet within budget");
  Ledger ledger(evaluator, 0);
  ledger.evaluate(std::move(feasible), 0);
  return ledger.finish(budget_ms);
}

std::optional<size_t> evaluations_to_reach(const std::vector<HistoryRow>& history,
                                           double budget_ms, double target) {
  for (size_t i = 0; i < history.size(); ++i) {
    if (history[i].latency <= budget_ms && history[i].accuracy >= target - 1e-9) return i + 1;
  }
  return std::nullopt;
}

}  // namespace edgeadapt
