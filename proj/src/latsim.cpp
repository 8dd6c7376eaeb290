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

#include "edgeadapt/latsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace edgeadapt {

double LatencyTable::at(VariantKey key) const {
  auto it = entries.find(key);
  if (it == entries.end()) throw Error("latency table has no entry for " + key.str());
  return it->second;
}

void LatencyTable::check_covers(const SupernetGraph& graph) const {
  for (const auto& [key, v] : graph.variants()) {
    double ms = at(key);
    if (!(ms > 0.0)) throw Error("latency table entry " + key.str() + " is not positive");
  }
}

double EnvProfile::scale_at(double time_ms) const {
  double scale = 1.0;
  for (const ScaleEvent& e : timeline) {
    if (e.time_ms > time_ms) break;
    scale = e.scale;
  }
  return scale;
}

void EnvProfile::validate() const {
  for (size_t i = 0; i < timeline.size(); ++i) {
    if (!(timeline[i].scale > 0.0)) throw Error("scale multipliers must be positive");
    if (i > 0 && !(timeline[i].time_ms > timeline[i - 1].time_ms)) {
      throw Error("timeline times must be strictly increasing");
    }
  }
  if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) {
    throw Error("noise fraction must lie in [0, 1)");
  }
  for (const auto& [key, ms] : base_cost_ms) {
    if (!(ms > 0.0)) throw Error("base cost of " + key.str() + " is not positive");
  }
}

double EnvProfile::draw_jitter(Rng& rng) const {
  if (noise_fraction == 0.0) return 0.0;
  // Clipped normal with sigma = noise/3: mostly small, never out of bounds.
  return std::clamp(rng.normal(0.0, noise_fraction / 3.0), -noise_fraction, noise_fraction);
}

const std::vector<DevicePreset>& device_presets() {
  static const std::vector<DevicePreset> presets = {
      {"ideal", 0.1, 0.0},
      {"xiaomi12", 0.1, 0.05},
      {"pixel6pro", 0.1 * 31.29 / 14.43, 0.05},
      {"pixel2", 0.1 * 46.45 / 14.43, 0.05},
      {"huawei-nova4", 0.1 * 53.05 / 14.43, 0.05},
  };
  return presets;
}

const DevicePreset& find_device_preset(std::string_view name) {
  for (const auto& p : device_presets()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const auto& p : device_presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw Error("unknown env preset '" + std::string(name) + "' (known: " + known + ")");
}

uint64_t variant_macs(const BlockVariant& v) {
  uint64_t macs = 0;
  for (const UnitShape& u : v.units) macs += u.in_dim * u.width + u.width * u.out_dim;
  return macs;
}

EnvProfile make_env(const SupernetGraph& graph, std::string_view preset, double noise_fraction,
                    std::vector<ScaleEvent> timeline) {
  const DevicePreset& device = find_device_preset(preset);
  EnvProfile env;
  env.device_id = device.name;
  env.noise_fraction = noise_fraction;
  env.timeline = std::move(timeline);
  for (const auto& [key, v] : graph.variants()) {
    env.base_cost_ms[key] = static_cast<double>(variant_macs(v)) / 1000.0 * device.ms_per_kmac;
  }
  env.validate();
  return env;
}

EnvProfile make_env(const SupernetGraph& graph, std::string_view preset) {
  return make_env(graph, preset, find_device_preset(preset).default_noise);
}

std::vector<ScaleEvent> scenario_timeline(std::string_view scenario, double event_ms,
                                          double recover_ms) {
  if (scenario == "flat") return {};
  if (scenario == "step-x2") return {{event_ms, 2.0}};
  if (scenario == "step-x3") return {{event_ms, 3.0}};
  if (scenario == "step-x2-back") {
    if (!(recover_ms > event_ms)) throw Error("recovery time must follow the event time");
    return {{event_ms, 2.0}, {recover_ms, 1.0}};
  }
  throw Error("unknown scenario '" + std::string(scenario) +
              "' (known: flat, step-x2, step-x2-back, step-x3)");
}

ProfileResult profile_blocks(const SupernetGraph& graph, const EnvProfile& env,
                             int runs_per_block, uint64_t seed, double wall_time_ms) {
  if (runs_per_block < 3) throw Error("profiling needs at least 3 runs per block");
  env.validate();
  ProfileResult out;
  out.table.device_id = env.device_id;
  out.table.profiled_at_ms = wall_time_ms;
  Rng rng = Rng::stream(seed, "profile");
  const double scale = env.scale_at(wall_time_ms);
  std::vector<double> runs(static_cast<size_t>(runs_per_block));
  for (const auto& [key, v] : graph.variants()) {
    auto it = env.base_cost_ms.find(key);
    if (it == env.base_cost_ms.end()) throw Error("environment has no base cost for " + key.str());
    for (double& r : runs) {
      r = it->second * scale * (1.0 + env.draw_jitter(rng));
      ++out.timings;
    }
    std::sort(runs.begin(), runs.end());
    const size_t mid = runs.size() / 2;
    out.table.entries[key] =
        runs.size() % 2 ? runs[mid] : 0.5 * (runs[mid - 1] + runs[mid]);
  }
  return out;
}

double subnet_latency(const LatencyTable& table, const SubnetEncoding& enc) {
  double total = 0.0;
  for (const VariantKey& key : enc.choices()) total += table.at(key);
  return total;
}

double expected_inference_ms(const SubnetEncoding& enc, const EnvProfile& env,
                             double wall_time_ms) {
  double total = 0.0;
  for (const VariantKey& key : enc.choices()) {
    auto it = env.base_cost_ms.find(key);
    if (it == env.base_cost_ms.end()) throw Error("environment has no base cost for " + key.str());
    total += it->second;
  }
  return total * env.scale_at(wall_time_ms);
}

double simulate_inference(const SubnetEncoding& enc, const EnvProfile& env,
                          double wall_time_ms, uint64_t seed) {
  Rng rng = Rng::stream(seed, "inference");
  return expected_inference_ms(enc, env, wall_time_ms) * (1.0 + env.draw_jitter(rng));
}

LatencyTable nominal_table(const EnvProfile& env) {
  LatencyTable t;
  t.device_id = env.device_id;
  t.entries = env.base_cost_ms;
  return t;
}

std::vector<double> sample_dirichlet(size_t k, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw Error("Dirichlet concentration must be positive");
  std::vector<double> logs(k);
  for (double& l : logs) l = rng.log_gamma(alpha);
  const double mx = *std::max_element(logs.begin(), logs.end());
  double total = 0.0;
  std::vector<double> p(k);
  for (size_t i = 0; i < k; ++i) {
    p[i] = std::exp(logs[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

EdgeDataset make_edge_dataset(const Dataset& base, double alpha, size_t size, uint64_t seed) {
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  if (base.classes < 2) throw Error("edge dataset needs a base dataset with at least 2 classes");
  Rng prop_rng = Rng::stream(seed, "proportions");
  Rng draw_rng = Rng::stream(seed, "draws");
  EdgeDataset out;
  out.alpha = alpha;
  out.class_proportions = sample_dirichlet(base.classes, alpha, prop_rng);

  // Largest-remainder rounding of size * p.
  const size_t k = base.classes;
  std::vector<size_t> counts(k);
  std::vector<std::pair<double, size_t>> remainders;
  size_t assigned = 0;
  for (size_t c = 0; c < k; ++c) {
    const double exact = out.class_proportions[c] * static_cast<double>(size);
    counts[c] = static_cast<size_t>(std::floor(exact));
    assigned += counts[c];
    remainders.push_back({exact - std::floor(exact), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t i = 0; assigned < size; ++i, ++assigned) ++counts[remainders[i % k].second];

  std::vector<std::vector<size_t>> by_class(k);
  for (size_t i = 0; i < base.size(); ++i) by_class[static_cast<size_t>(base.labels[i])].push_back(i);
  std::vector<size_t> rows;
  for (size_t c = 0; c < k; ++c) {
    if (counts[c] > 0 && by_class[c].empty()) {
      throw Error("base dataset has no examples of class " + std::to_string(c));
    }
    for (size_t i = 0; i < counts[c]; ++i) rows.push_back(by_class[c][draw_rng.below(by_class[c].size())]);
  }
  std::vector<size_t> order = shuffled_indices(rows.size(), draw_rng);
  std::vector<size_t> shuffled;
  shuffled.reserve(rows.size());
  for (size_t i : order) shuffled.push_back(rows[i]);
  out.data = base.gather(shuffled);
  return out;
}

}  // namespace edgeadapt
