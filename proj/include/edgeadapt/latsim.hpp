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

#ifndef EDGEADAPT_LATSIM_HPP_
#define EDGEADAPT_LATSIM_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "edgeadapt/dataset.hpp"
#include "edgeadapt/graph.hpp"

namespace edgeadapt {

/// Per-variant latency in milliseconds, as profiled on one device.
struct LatencyTable {
  std::map<VariantKey, double> entries;
  std::string device_id;
  double profiled_at_ms = 0.0;

  /// Throws Error for a missing entry.
  double at(VariantKey key) const;
  /// Checks every graph variant has a positive entry.
  void check_covers(const SupernetGraph& graph) const;
};

struct ScaleEvent {
  double time_ms = 0.0;
  double scale = 1.0;
};

/// Simulated device: block base costs, a global slowdown timeline, and
/// bounded multiplicative jitter.
struct EnvProfile {
  std::string device_id;
  std::map<VariantKey, double> base_cost_ms;
  std::vector<ScaleEvent> timeline;  // strictly increasing times
  double noise_fraction = 0.0;

  /// Scale in effect at `time_ms`: that of the last event at or before it,
  /// 1 before the first event.
  double scale_at(double time_ms) const;
  void validate() const;
  /// Relative jitter in [-noise_fraction, noise_fraction].
  double draw_jitter(Rng& rng) const;
};

struct DevicePreset {
  std::string name;
  double ms_per_kmac;
  double default_noise;
};

/// Device speed presets. Relative speeds follow measured MobileNetV2
/// latencies on four phones (14.43, 53.05, 46.45, 31.29 ms); "ideal" is the
/// fastest device with no jitter.
const std::vector<DevicePreset>& device_presets();
const DevicePreset& find_device_preset(std::string_view name);

/// Multiply-accumulates per example: in*width + width*out per unit.
uint64_t variant_macs(const BlockVariant& v);

/// Base costs for every variant of `graph` on the named device.
EnvProfile make_env(const SupernetGraph& graph, std::string_view preset,
                    double noise_fraction, std::vector<ScaleEvent> timeline = {});
EnvProfile make_env(const SupernetGraph& graph, std::string_view preset);

/// Scripted environment drift: "flat", "step-x2", "step-x2-back", "step-x3".
std::vector<ScaleEvent> scenario_timeline(std::string_view scenario, double event_ms,
                                          double recover_ms);

struct ProfileResult {
  LatencyTable table;
  uint64_t timings = 0;  // simulator invocations spent
};

/// Times each variant `runs_per_block` times and keeps the median.
ProfileResult profile_blocks(const SupernetGraph& graph, const EnvProfile& env,
                             int runs_per_block, uint64_t seed, double wall_time_ms = 0.0);

/// Sum of the chosen variants' table entries, in choice order.
double subnet_latency(const LatencyTable& table, const SubnetEncoding& enc);

/// Jitter-free end-to-end time of `enc` at `wall_time_ms`.
double expected_inference_ms(const SubnetEncoding& enc, const EnvProfile& env,
                             double wall_time_ms);

/// One observed end-to-end inference time.
double simulate_inference(const SubnetEncoding& enc, const EnvProfile& env,
                          double wall_time_ms, uint64_t seed);

/// Table of noise-free base costs, used where no profiling has happened yet.
LatencyTable nominal_table(const EnvProfile& env);

struct EdgeDataset {
  Dataset data;
  std::vector<double> class_proportions;
  double alpha = 0.0;
};

/// Class-imbalanced resample of `base`: proportions ~ Dirichlet(alpha * 1),
/// then per-class draws with replacement.
EdgeDataset make_edge_dataset(const Dataset& base, double alpha, size_t size, uint64_t seed);

std::vector<double> sample_dirichlet(size_t k, double alpha, Rng& rng);

}  // namespace edgeadapt

#endif  // EDGEADAPT_LATSIM_HPP_
