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

#ifndef EDGEADAPT_EVALCACHE_HPP_
#define EDGEADAPT_EVALCACHE_HPP_

// Reuse-based candidate evaluation. Candidates sharing a prefix of block
// choices are grouped under a tree node; a depth-first walk computes each
// shared prefix feature once per batch, hands it to every descendant, and
// drops it when the subtree is done.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "edgeadapt/dataset.hpp"
#include "edgeadapt/engine.hpp"
#include "edgeadapt/graph.hpp"
#include "edgeadapt/latsim.hpp"

namespace edgeadapt {

struct PrefixNode {
  size_t prefix_length = 0;   // choices from position 0; 0 for the root
  size_t representative = 0;  // a candidate whose first prefix_length choices are the prefix
  size_t share_count = 0;     // candidates carrying this prefix
  double latency = 0.0;       // table latency of the prefix
  double importance = 0.0;    // latency * share_count / total candidates
  std::vector<size_t> children;  // node indices
  std::vector<size_t> leaves;    // candidate indices
};

/// Evaluation schedule. Node 0 is the root (the head output); every other
/// node caches one intermediate feature while its subtree runs.
class PrefixTree {
 public:
  const std::vector<PrefixNode>& nodes() const { return nodes_; }
  const std::vector<SubnetEncoding>& candidates() const { return candidates_; }
  size_t depth_cap() const { return depth_cap_; }
  size_t internal_count() const { return nodes_.empty() ? 0 : nodes_.size() - 1; }
  /// Largest number of cached nodes on any root-to-leaf path.
  size_t depth() const;
  std::vector<VariantKey> prefix(size_t node) const;

 private:
  friend PrefixTree build_tree(std::vector<SubnetEncoding>, const LatencyTable&, size_t);
  std::vector<PrefixNode> nodes_;
  std::vector<SubnetEncoding> candidates_;
  size_t depth_cap_ = 0;
};

/// Builds the schedule for distinct candidates. Every candidate becomes one
/// leaf. Shared prefixes compete for the at most depth_cap cache slots on
/// each path by importance.
PrefixTree build_tree(std::vector<SubnetEncoding> candidates, const LatencyTable& table,
                      size_t depth_cap);

struct EvalReport {
  std::vector<double> accuracy;  // per candidate, in input order
  std::vector<uint64_t> correct;
  uint64_t examples = 0;
  uint64_t block_forward_count = 0;
  uint64_t naive_forward_count = 0;
  size_t peak_cached_features = 0;
  size_t batches_loaded = 0;
};

/// Evaluates every leaf of `tree` on one batch. accuracy is per-batch.
EvalReport dfs_evaluate(const PrefixTree& tree, const Dataset& batch,
                        const SupernetWeights& weights);

/// Loads each batch of `data` once and runs dfs_evaluate over the whole
/// candidate group on it.
EvalReport group_evaluate(const std::vector<SubnetEncoding>& candidates, const Dataset& data,
                          const SupernetWeights& weights, const LatencyTable& table,
                          size_t depth_cap, size_t batch_size = 256);

/// Callable evaluator for the search loops, with running totals.
class GroupEvaluator {
 public:
  GroupEvaluator(const SupernetWeights& weights, const Dataset& data, const LatencyTable& table,
                 size_t depth_cap, size_t batch_size = 256)
      : weights_(&weights), data_(&data), table_(&table), depth_cap_(depth_cap),
        batch_size_(batch_size) {}

  std::vector<double> operator()(const std::vector<SubnetEncoding>& candidates);

  uint64_t candidates_evaluated() const { return candidates_evaluated_; }
  uint64_t block_forwards() const { return block_forwards_; }
  uint64_t naive_forwards() const { return naive_forwards_; }

 private:
  const SupernetWeights* weights_;
  const Dataset* data_;
  const LatencyTable* table_;
  size_t depth_cap_;
  size_t batch_size_;
  uint64_t candidates_evaluated_ = 0;
  uint64_t block_forwards_ = 0;
  uint64_t naive_forwards_ = 0;
};

}  // namespace edgeadapt

#endif  // EDGEADAPT_EVALCACHE_HPP_
