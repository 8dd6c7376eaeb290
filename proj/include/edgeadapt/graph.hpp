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

#ifndef EDGEADAPT_GRAPH_HPP_
#define EDGEADAPT_GRAPH_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "edgeadapt/common.hpp"
#include "edgeadapt/rng.hpp"

namespace edgeadapt {

using SubnetCount = boost::multiprecision::cpp_int;

/// One layer of a pretrained chain model, as seen by the partitioner.
struct ChainLayer {
  size_t in_dim = 0;
  size_t out_dim = 0;
  size_t width = 0;
  uint64_t param_size = 0;
  // Consecutive layers with the same non-negative tag are fused by the
  // inference runtime and must land in the same basic block. -1: unfused.
  int fusion_tag = -1;
  // Merged variants never cross a stage boundary.
  int stage = 0;
};

/// Shape of one bottleneck unit: in_dim -> width -> out_dim.
struct UnitShape {
  size_t in_dim = 0;
  size_t width = 0;
  size_t out_dim = 0;

  uint64_t param_size() const {
    return in_dim * width + width + width * out_dim + out_dim;
  }
  friend bool operator==(const UnitShape&, const UnitShape&) = default;
};

/// Smallest replaceable unit of the original chain.
struct BlockPosition {
  int index = 0;
  size_t in_dim = 0;
  size_t out_dim = 0;
  uint64_t param_size = 0;
  int stage = 0;
  size_t first_layer = 0;
  size_t layer_count = 0;
  std::vector<UnitShape> units;

  friend bool operator==(const BlockPosition&, const BlockPosition&) = default;
};

struct BlockVariant {
  VariantKey key;
  size_t in_dim = 0;
  size_t out_dim = 0;
  uint64_t param_size = 0;
  size_t width = 0;         // widest internal bottleneck
  double shrink_rate = 1.0;  // < 1 only for shrunk variants
  std::vector<UnitShape> units;

  int span() const { return key.span(); }
  friend bool operator==(const BlockVariant&, const BlockVariant&) = default;
};

/// Ordered (start, degree) choices covering every position exactly once.
/// The canonical "arch" string is the comma-joined "start:degree" list.
class SubnetEncoding {
 public:
  SubnetEncoding() = default;
  explicit SubnetEncoding(std::vector<VariantKey> choices)
      : choices_(std::move(choices)) {}

  /// Parses "0:0,1:1,3:-2". Throws Error on malformed input.
  static SubnetEncoding parse(std::string_view arch);

  const std::vector<VariantKey>& choices() const { return choices_; }
  size_t size() const { return choices_.size(); }
  const VariantKey& operator[](size_t i) const { return choices_[i]; }
  std::string arch() const;
  /// Number of choices that are not original blocks.
  size_t new_block_count() const;

  friend bool operator==(const SubnetEncoding&, const SubnetEncoding&) = default;
  friend auto operator<=>(const SubnetEncoding& a, const SubnetEncoding& b) {
    return a.arch() <=> b.arch();
  }

 private:
  std::vector<VariantKey> choices_;
};

/// DAG of original and alternative blocks. Every input-to-output path is a
/// valid subnet. Immutable once built by expand_graph (add_variant aside).
class SupernetGraph {
 public:
  SupernetGraph() = default;
  SupernetGraph(std::vector<BlockPosition> positions, double gamma,
                uint64_t original_params);

  /// Adds a variant after checking shape, stage, and key invariants.
  void add_variant(BlockVariant v);

  const std::vector<BlockPosition>& positions() const { return positions_; }
  int size() const { return static_cast<int>(positions_.size()); }
  const std::map<VariantKey, BlockVariant>& variants() const { return variants_; }
  const BlockVariant* find(VariantKey key) const;
  const BlockVariant& at(VariantKey key) const;
  /// Variants starting at `start`, ordered by degree.
  const std::vector<VariantKey>& variants_at(int start) const;

  double gamma() const { return gamma_; }
  uint64_t original_params() const { return original_params_; }

  size_t input_dim = 0;
  size_t num_classes = 0;

 private:
  std::vector<BlockPosition> positions_;
  std::map<VariantKey, BlockVariant> variants_;
  std::vector<std::vector<VariantKey>> by_start_;
  double gamma_ = 1.0;
  uint64_t original_params_ = 0;
};

/// Groups chain layers into basic blocks: fused layers stay together, every
/// block stays within gamma * P0 parameters.
std::vector<BlockPosition> partition_blocks(std::span<const ChainLayer> layers,
                                            double gamma);

/// Adds merged variants (degree 1..max_merge) and one shrunk variant per
/// rate (degree -1, -2, ...) around the original blocks.
SupernetGraph expand_graph(std::vector<BlockPosition> blocks, int max_merge,
                           std::span<const double> shrink_rates, double gamma = 1.0,
                           uint64_t original_params = 0);

SubnetCount count_subnets(const SupernetGraph& graph);

/// nullopt if valid, otherwise the first violation ("gap at 2", ...).
std::optional<std::string> validate_subnet(const SupernetGraph& graph,
                                           const SubnetEncoding& enc);

SubnetEncoding all_original_subnet(const SupernetGraph& graph);

/// Every subnet, in lexicographic (start, degree) path order. Throws if the
/// space holds more than `cap` subnets.
std::vector<SubnetEncoding> enumerate_subnets(const SupernetGraph& graph,
                                              size_t cap = 10000);

/// Every way to tile positions [begin, end) with variants lying inside it.
std::vector<std::vector<VariantKey>> enumerate_tilings(const SupernetGraph& graph,
                                                       int begin, int end);

/// Draws subnets uniformly over all paths, weighting each choice by the
/// number of completions after it.
class UniformSubnetSampler {
 public:
  explicit UniformSubnetSampler(const SupernetGraph& graph);
  SubnetEncoding sample(Rng& rng) const;

 private:
  const SupernetGraph* graph_;
  std::vector<SubnetCount> completions_;  // completions_[i]: paths from i to n
};

SubnetEncoding sample_uniform_subnet(const SupernetGraph& graph, uint64_t seed);

}  // namespace edgeadapt

#endif  // EDGEADAPT_GRAPH_HPP_
