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

#include "edgeadapt/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>

namespace edgeadapt {
namespace {

int parse_int(std::string_view s, size_t choice) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw Error("malformed arch: bad integer '" + std::string(s) + "' in choice " +
                std::to_string(choice));
  }
  return value;
}

// Uniform integer in [0, bound) for arbitrary-size bounds.
SubnetCount random_below(const SubnetCount& bound, Rng& rng) {
  if (bound <= std::numeric_limits<uint64_t>::max()) {
    return SubnetCount(rng.below(static_cast<uint64_t>(bound)));
  }
  const unsigned bits = boost::multiprecision::msb(bound) + 1;
  const SubnetCount mask = (SubnetCount(1) << bits) - 1;
  for (;;) {
    SubnetCount r = 0;
    for (unsigned have = 0; have < bits; have += 64) {
      r = (r << 64) | SubnetCount(rng.next_u64());
    }
    r &= mask;
    if (r < bound) return r;
  }
}

}  // namespace

SubnetEncoding SubnetEncoding::parse(std::string_view arch) {
  if (arch.empty()) throw Error("malformed arch: empty string");
  std::vector<VariantKey> choices;
  size_t pos = 0;
  while (pos <= arch.size()) {
    size_t comma = arch.find(',', pos);
    if (comma == std::string_view::npos) comma = arch.size();
    std::string_view item = arch.substr(pos, comma - pos);
    size_t colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw Error("malformed arch: choice " + std::to_string(choices.size()) +
                  " lacks ':' in '" + std::string(item) + "'");
    }
    VariantKey key;
    key.start = parse_int(item.substr(0, colon), choices.size());
    key.degree = parse_int(item.substr(colon + 1), choices.size());
    choices.push_back(key);
    pos = comma + 1;
  }
  return SubnetEncoding(std::move(choices));
}

std::string SubnetEncoding::arch() const {
  std::string out;
  for (size_t i = 0; i < choices_.size(); ++i) {
    if (i) out += ',';
    out += choices_[i].str();
  }
  return out;
}

size_t SubnetEncoding::new_block_count() const {
  return static_cast<size_t>(std::count_if(choices_.begin(), choices_.end(),
                                           [](const VariantKey& k) { return !k.is_original(); }));
}

SupernetGraph::SupernetGraph(std::vector<BlockPosition> positions, double gamma,
                             uint64_t original_params)
    : positions_(std::move(positions)),
      by_start_(positions_.size()),
      gamma_(gamma),
      original_params_(original_params) {
  for (size_t i = 0; i < positions_.size(); ++i) {
    if (positions_[i].index != static_cast<int>(i)) {
      throw Error("block position " + std::to_string(i) + " has index " +
                  std::to_string(positions_[i].index));
    }
    if (i > 0 && positions_[i].in_dim != positions_[i - 1].out_dim) {
      throw Error("block " + std::to_string(i) + " input dim does not match block " +
                  std::to_string(i - 1) + " output dim");
    }
  }
}

void SupernetGraph::add_variant(BlockVariant v) {
  const VariantKey key = v.key;
  if (key.start < 0 || key.end() > size()) {
    throw Error("variant " + key.str() + " is out of range");
  }
  if (variants_.count(key)) throw Error("duplicate variant " + key.str());
  const BlockPosition& first = positions_[key.start];
  const BlockPosition& last = positions_[key.end() - 1];
  if (v.in_dim != first.in_dim || v.out_dim != last.out_dim) {
    throw Error("variant " + key.str() + " boundary shapes differ from the segment it replaces");
  }
  for (int p = key.start; p < key.end(); ++p) {
    if (positions_[p].stage != first.stage) {
      throw Error("variant " + key.str() + " crosses a stage boundary");
    }
  }
  if (v.units.empty()) throw Error("variant " + key.str() + " has no units");
  if (v.units.front().in_dim != v.in_dim || v.units.back().out_dim != v.out_dim) {
    throw Error("variant " + key.str() + " unit dims do not match its boundary");
  }
  for (size_t u = 1; u < v.units.size(); ++u) {
    if (v.units[u].in_dim != v.units[u - 1].out_dim) {
      throw Error("variant " + key.str() + " has inconsistent unit dims");
    }
  }
  auto& list = by_start_[key.start];
  list.insert(std::upper_bound(list.begin(), list.end(), key), key);
  variants_.emplace(key, std::move(v));
}

const BlockVariant* SupernetGraph::find(VariantKey key) const {
  auto it = variants_.find(key);
  return it == variants_.end() ? nullptr : &it->second;
}

const BlockVariant& SupernetGraph::at(VariantKey key) const {
  const BlockVariant* v = find(key);
  if (!v) throw Error("unknown variant " + key.str());
  return *v;
}

const std::vector<VariantKey>& SupernetGraph::variants_at(int start) const {
  return by_start_.at(static_cast<size_t>(start));
}

std::vector<BlockPosition> partition_blocks(std::span<const ChainLayer> layers,
                                            double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("gamma must lie in (0, 1]");
  if (layers.empty()) throw Error("chain model has no layers");
  uint64_t p0 = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].param_size == 0) {
      throw Error("layer " + std::to_string(i) + " has zero parameters");
    }
    if (i > 0 && layers[i].in_dim != layers[i - 1].out_dim) {
      throw Error("layer " + std::to_string(i) + " input dim does not match layer " +
                  std::to_string(i - 1) + " output dim");
    }
    p0 += layers[i].param_size;
  }
  const double cap = gamma * static_cast<double>(p0);

  std::vector<BlockPosition> blocks;
  size_t i = 0;
  while (i < layers.size()) {
    size_t j = i + 1;
    if (layers[i].fusion_tag >= 0) {
      while (j < layers.size() && layers[j].fusion_tag == layers[i].fusion_tag) ++j;
    }
    BlockPosition b;
    b.index = static_cast<int>(blocks.size());
    b.in_dim = layers[i].in_dim;
    b.out_dim = layers[j - 1].out_dim;
    b.stage = layers[i].stage;
    b.first_layer = i;
    b.layer_count = j - i;
    for (size_t k = i; k < j; ++k) {
      if (layers[k].stage != b.stage) {
        throw Error("fused layers " + std::to_string(i) + ".." + std::to_string(j - 1) +
                    " span two stages");
      }
      b.param_size += layers[k].param_size;
      b.units.push_back({layers[k].in_dim, layers[k].width, layers[k].out_dim});
    }
    if (static_cast<double>(b.param_size) > cap) {
      throw Error("granularity infeasible: layers " + std::to_string(i) + ".." +
                  std::to_string(j - 1) + " hold " + std::to_string(b.param_size) +
                  " parameters, above gamma * P0 = " + std::to_string(cap));
    }
    blocks.push_back(std::move(b));
    i = j;
  }
  return blocks;
}

SupernetGraph expand_graph(std::vector<BlockPosition> blocks, int max_merge,
                           std::span<const double> shrink_rates, double gamma,
                           uint64_t original_params) {
  if (blocks.empty()) throw Error("cannot expand an empty block list");
  const int n = static_cast<int>(blocks.size());
  if (max_merge < 0 || max_merge >= n) {
    throw Error("max_merge must lie in [0, " + std::to_string(n) + ")");
  }
  for (size_t k = 0; k < shrink_rates.size(); ++k) {
    double r = shrink_rates[k];
    if (!(r > 0.0 && r < 1.0)) throw Error("shrink rates must lie strictly in (0, 1)");
    if (k > 0 && !(r < shrink_rates[k - 1])) {
      throw Error("shrink rates must be strictly decreasing");
    }
  }
  if (original_params == 0) {
    for (const auto& b : blocks) original_params += b.param_size;
  }
  const std::vector<BlockPosition> pos = blocks;
  SupernetGraph graph(std::move(blocks), gamma, original_params);

  auto widest = [](const std::vector<UnitShape>& units) {
    size_t w = 0;
    for (const auto& u : units) w = std::max(w, u.width);
    return w;
  };

  for (int i = 0; i < n; ++i) {
    BlockVariant orig;
    orig.key = {i, 0};
    orig.in_dim = pos[i].in_dim;
    orig.out_dim = pos[i].out_dim;
    orig.param_size = pos[i].param_size;
    orig.units = pos[i].units;
    orig.width = widest(orig.units);
    graph.add_variant(orig);

    for (int j = 1; j <= max_merge && i + j < n; ++j) {
      bool same_stage = true;
      int largest = i;
      for (int p = i; p <= i + j; ++p) {
        same_stage = same_stage && pos[p].stage == pos[i].stage;
        if (pos[p].param_size > pos[largest].param_size) largest = p;
      }
      if (!same_stage) continue;
      BlockVariant merged;
      merged.key = {i, j};
      merged.in_dim = pos[i].in_dim;
      merged.out_dim = pos[i + j].out_dim;
      merged.param_size = pos[largest].param_size;
      merged.units = pos[largest].units;
      merged.units.front().in_dim = merged.in_dim;
      merged.units.back().out_dim = merged.out_dim;
      merged.width = widest(merged.units);
      graph.add_variant(std::move(merged));
    }

    for (size_t k = 0; k < shrink_rates.size(); ++k) {
      BlockVariant shrunk;
      shrunk.key = {i, -static_cast<int>(k + 1)};
      shrunk.in_dim = pos[i].in_dim;
      shrunk.out_dim = pos[i].out_dim;
      shrunk.shrink_rate = shrink_rates[k];
      shrunk.units = pos[i].units;
      for (auto& u : shrunk.units) {
        u.width = std::max<size_t>(
            1, static_cast<size_t>(std::ceil(shrink_rates[k] * static_cast<double>(u.width))));
        shrunk.param_size += u.param_size();
      }
      shrunk.width = widest(shrunk.units);
      graph.add_variant(std::move(shrunk));
    }
  }
  return graph;
}

SubnetCount count_subnets(const SupernetGraph& graph) {
  const int n = graph.size();
  std::vector<SubnetCount> paths(static_cast<size_t>(n) + 1, 0);
  paths[0] = 1;
  // variants() iterates by start, so every path count reaching `start` is
  // final before it is read.
  for (const auto& [key, v] : graph.variants()) {
    paths[key.end()] += paths[key.start];
  }
  return paths[n];
}

std::optional<std::string> validate_subnet(const SupernetGraph& graph,
                                           const SubnetEncoding& enc) {
  int pos = 0;
  for (const VariantKey& key : enc.choices()) {
    if (key.start > pos) return "gap at " + std::to_string(pos);
    if (key.start < pos) return "overlap at " + std::to_string(key.start);
    if (!graph.find(key)) return "unknown variant " + key.str();
    pos = key.end();
  }
  if (pos < graph.size()) return "gap at " + std::to_string(pos);
  return std::nullopt;
}

SubnetEncoding all_original_subnet(const SupernetGraph& graph) {
  std::vector<VariantKey> choices;
  for (int i = 0; i < graph.size(); ++i) choices.push_back({i, 0});
  return SubnetEncoding(std::move(choices));
}

std::vector<std::vector<VariantKey>> enumerate_tilings(const SupernetGraph& graph,
                                                       int begin, int end) {
  std::vector<std::vector<VariantKey>> out;
  std::vector<VariantKey> path;
  std::function<void(int)> walk = [&](int pos) {
    if (pos == end) {
      out.push_back(path);
      return;
    }
    for (const VariantKey& key : graph.variants_at(pos)) {
      if (key.end() > end) continue;
      path.push_back(key);
      walk(key.end());
      path.pop_back();
    }
  };
  if (begin < end) walk(begin);
  return out;
}

std::vector<SubnetEncoding> enumerate_subnets(const SupernetGraph& graph, size_t cap) {
  const SubnetCount total = count_subnets(graph);
  if (total > cap) {
    throw Error("subnet space too large to enumerate: " + total.str() + " > cap " +
                std::to_string(cap));
  }
  std::vector<SubnetEncoding> out;
  out.reserve(static_cast<size_t>(total));
  for (auto& tiling : enumerate_tilings(graph, 0, graph.size())) {
    out.emplace_back(std::move(tiling));
  }
  return out;
}

UniformSubnetSampler::UniformSubnetSampler(const SupernetGraph& graph) : graph_(&graph) {
  const int n = graph.size();
  completions_.assign(static_cast<size_t>(n) + 1, 0);
  completions_[n] = 1;
  for (int i = n - 1; i >= 0; --i) {
    for (const VariantKey& key : graph.variants_at(i)) {
      completions_[i] += completions_[key.end()];
    }
  }
}

SubnetEncoding UniformSubnetSampler::sample(Rng& rng) const {
  std::vector<VariantKey> choices;
  int pos = 0;
  while (pos < graph_->size()) {
    SubnetCount pick = random_below(completions_[pos], rng);
    const auto& keys = graph_->variants_at(pos);
    VariantKey chosen = keys.back();
    for (const VariantKey& key : keys) {
      const SubnetCount& w = completions_[key.end()];
      if (pick < w) {
        chosen = key;
        break;
      }
      pick -= w;
    }
    choices.push_back(chosen);
    pos = chosen.end();
  }
  return SubnetEncoding(std::move(choices));
}

SubnetEncoding sample_uniform_subnet(const SupernetGraph& graph, uint64_t seed) {
  Rng rng(seed);
  return UniformSubnetSampler(graph).sample(rng);
}

}  // namespace edgeadapt
