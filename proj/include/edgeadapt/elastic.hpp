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

#ifndef EDGEADAPT_ELASTIC_HPP_
#define EDGEADAPT_ELASTIC_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "edgeadapt/dataset.hpp"
#include "edgeadapt/engine.hpp"
#include "edgeadapt/graph.hpp"
#include "edgeadapt/latsim.hpp"

namespace edgeadapt {

/// Layer widths and tags of the chain model to pretrain.
struct ToyArchitecture {
  size_t dim = 16;
  std::vector<size_t> widths;
  std::vector<int> fusion_tags;  // empty: no fusion
  std::vector<int> stages;       // empty: one stage

  static ToyArchitecture uniform(size_t layers, size_t dim, size_t width);
};

/// Trains the chain model from scratch with minibatch SGD on cross-entropy.
/// Throws Error if the loss becomes non-finite.
ToyClassifier pretrain_toy(const Dataset& data, const ToyArchitecture& arch, int epochs,
                           double lr, uint64_t seed, size_t batch_size = 32);

double classifier_accuracy(const ToyClassifier& model, const Dataset& data);

/// Copies head, tail, and original blocks from the pretrained model and
/// draws every new branch uniformly from [-init_scale, init_scale].
SupernetWeights init_supernet_weights(const ToyClassifier& pretrained, const SupernetGraph& graph,
                                      uint64_t seed, double init_scale = 0.05);

/// SHA-256 (hex) over head, tail, and all original blocks.
std::string frozen_params_hash(const SupernetWeights& weights);

struct LatencyBin {
  double low = 0.0;   // inclusive
  double high = 0.0;  // exclusive
};

/// `count` equal-width bins spanning the table's subnet latency range.
std::vector<LatencyBin> default_latency_bins(const SupernetGraph& graph,
                                             const LatencyTable& table, size_t count);

struct TrainConfig {
  int distill_epochs = 30;
  int tune_epochs = 30;
  double lr_distill = 0.01;
  double lr_tune = 0.001;
  size_t batch_size = 8;
  size_t eval_subnet_samples = 64;
  std::vector<LatencyBin> latency_bins;
  uint64_t seed = 0;

  void validate() const;
};

struct StepResult {
  bool applied = false;  // false when the subnet had no new blocks
  double loss = 0.0;     // per-example loss, valid when applied
  SubnetEncoding subnet;
};

/// Block-local distillation of the new blocks of `enc`: each student sees
/// the teacher's feature at its start boundary and imitates the teacher's
/// feature at its end boundary. Only those branches are updated.
StepResult distill_on(SupernetWeights& weights, const SubnetEncoding& enc, const Dataset& batch,
                      double lr);

/// End-to-end cross-entropy through `enc`; gradients pass through frozen
/// blocks, updates land only on new blocks.
StepResult tune_on(SupernetWeights& weights, const SubnetEncoding& enc, const Dataset& batch,
                   double lr);

/// Samples a subnet (resampling once if it has no new blocks) and applies
/// distill_on / tune_on.
StepResult distill_step(SupernetWeights& weights, const UniformSubnetSampler& sampler,
                        const Dataset& batch, Rng& rng, double lr);
StepResult tune_step(SupernetWeights& weights, const UniformSubnetSampler& sampler,
                     const Dataset& batch, Rng& rng, double lr);

struct BinAccuracy {
  LatencyBin bin;
  size_t count = 0;
  double mean_accuracy = 0.0;
};

struct LatencyRangeReport {
  std::vector<BinAccuracy> bins;  // occupied bins only, ascending
  size_t unbinned = 0;
  std::vector<SubnetEncoding> subnets;
  std::vector<double> latencies;
  std::vector<double> accuracies;
};

/// Mean accuracy of the given subnets per latency bin.
LatencyRangeReport evaluate_latency_bins(const SupernetWeights& weights,
                                         const LatencyTable& table,
                                         const std::vector<LatencyBin>& bins,
                                         const std::vector<SubnetEncoding>& subnets,
                                         const Dataset& eval_data);

/// Samples `sample_count` subnets uniformly and reports per-bin accuracy.
LatencyRangeReport latency_range_accuracy(const SupernetWeights& weights,
                                          const SupernetGraph& graph,
                                          const LatencyTable& table,
                                          const std::vector<LatencyBin>& bins,
                                          size_t sample_count, const Dataset& eval_data,
                                          uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // "distill" or "tune"
  double loss = 0.0;  // mean over applied steps
  std::vector<BinAccuracy> bins;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  std::string frozen_hash_before;
  std::string frozen_hash_after;
  double mean_subnet_accuracy = 0.0;  // over the fixed evaluation subnets
};

struct TrainResult {
  SupernetWeights weights;
  TrainingReport report;
};

/// Distillation phase followed by tuning phase, one sampled subnet per
/// batch. Evaluates a fixed uniform subnet sample after every epoch.
TrainResult train_supernet(SupernetWeights initial, const SupernetGraph& graph,
                           const TrainConfig& config, const Dataset& train_data,
                           const Dataset& eval_data, const LatencyTable& table);

}  // namespace edgeadapt

#endif  // EDGEADAPT_ELASTIC_HPP_
