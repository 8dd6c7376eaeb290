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

#include "edgeadapt/evalcache.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <unordered_map>

namespace edgeadapt {
namespace {

constexpr size_t kNone = static_cast<size_t>(-1);

struct TrieNode {
  std::map<VariantKey, size_t> children;
  size_t parent = kNone;
  size_t depth = 0;
  size_t count = 0;
  size_t representative = 0;
  std::vector<size_t> terminal;  // candidates ending here
};

}  // namespace

size_t PrefixTree::depth() const {
  std::function<size_t(size_t)> walk = [&](size_t n) -> size_t {
    size_t best = 0;
    for (size_t c : nodes_[n].children) best = std::max(best, 1 + walk(c));
    return best;
  };
  return nodes_.empty() ? 0 : walk(0);
}

std::vector<VariantKey> PrefixTree::prefix(size_t node) const {
  const PrefixNode& n = nodes_.at(node);
  const auto& choices = candidates_.at(n.representative).choices();
  return {choices.begin(), choices.begin() + static_cast<std::ptrdiff_t>(n.prefix_length)};
}

PrefixTree build_tree(std::vector<SubnetEncoding> candidates, const LatencyTable& table,
                      size_t depth_cap) {
  PrefixTree tree;
  tree.depth_cap_ = depth_cap;
  const size_t total = candidates.size();

  std::vector<TrieNode> trie(1);
  trie[0].count = total;
  for (size_t c = 0; c < total; ++c) {
    size_t at = 0;
    for (const VariantKey& key : candidates[c].choices()) {
      auto it = trie[at].children.find(key);
      size_t next;
      if (it == trie[at].children.end()) {
        next = trie.size();
        trie[at].children.emplace(key, next);
        TrieNode node;
        node.parent = at;
        node.depth = trie[at].depth + 1;
        node.representative = c;
        trie.push_back(std::move(node));
      } else {
        next = it->second;
      }
      ++trie[next].count;
      at = next;
    }
    if (!trie[at].terminal.empty()) {
      throw Error("build_tree: duplicate candidate " + candidates[c].arch());
    }
    trie[at].terminal.push_back(c);
  }

  // Cacheable prefixes are the branching points: a prefix with a single
  // continuation is dominated by that longer prefix with the same sharers.
  std::vector<size_t> cacheable;
  std::vector<double> importance(trie.size(), 0.0);
  std::vector<double> latency(trie.size(), 0.0);
  for (size_t v = 1; v < trie.size(); ++v) {
    latency[v] = latency[trie[v].parent] +
                 table.at(candidates[trie[v].representative][trie[v].depth - 1]);
    if (trie[v].children.size() >= 2) {
      importance[v] = latency[v] * static_cast<double>(trie[v].count) / static_cast<double>(total);
      cacheable.push_back(v);
    }
  }
  std::stable_sort(cacheable.begin(), cacheable.end(), [&](size_t a, size_t b) {
    if (importance[a] != importance[b]) return importance[a] > importance[b];
    return trie[a].depth < trie[b].depth;
  });

  // Admit prefixes by decreasing importance while every root-to-leaf path
  // holds at most depth_cap admitted prefixes.
  std::vector<char> admitted(trie.size(), 0);
  std::vector<size_t> below(trie.size(), 0);  // longest admitted chain strictly below
  for (size_t v : cacheable) {
    size_t above = 0;
    for (size_t a = trie[v].parent; a != kNone; a = trie[a].parent) above += admitted[a];
    if (above + 1 + below[v] > depth_cap) continue;
    admitted[v] = 1;
    size_t chain = 1 + below[v];
    for (size_t a = trie[v].parent; a != kNone; a = trie[a].parent) {
      below[a] = std::max(below[a], chain);
      chain += admitted[a];
    }
  }

  tree.nodes_.emplace_back();
  tree.nodes_[0].share_count = total;
  std::vector<size_t> node_of(trie.size(), kNone);
  node_of[0] = 0;
  std::function<void(size_t, size_t)> emit = [&](size_t v, size_t owner) {
    if (v != 0 && admitted[v]) {
      PrefixNode n;
      n.prefix_length = trie[v].depth;
      n.representative = trie[v].representative;
      n.share_count = trie[v].count;
      n.latency = latency[v];
      n.importance = importance[v];
      const size_t id = tree.nodes_.size();
      tree.nodes_.push_back(std::move(n));
      tree.nodes_[owner].children.push_back(id);
      owner = id;
    }
    for (size_t c : trie[v].terminal) tree.nodes_[owner].leaves.push_back(c);
    for (const auto& [key, child] : trie[v].children) emit(child, owner);
  };
  emit(0, 0);
  tree.candidates_ = std::move(candidates);
  return tree;
}

EvalReport dfs_evaluate(const PrefixTree& tree, const Dataset& batch,
                        const SupernetWeights& weights) {
  const auto& candidates = tree.candidates();
  const auto& nodes = tree.nodes();
  EvalReport report;
  report.correct.assign(candidates.size(), 0);
  report.examples = batch.size();
  report.batches_loaded = 1;
  for (const auto& c : candidates) report.naive_forward_count += c.size();

  size_t cached = 0;
  std::function<void(size_t, const DenseArray&, size_t)> visit =
      [&](size_t id, const DenseArray& feature, size_t consumed) {
        const PrefixNode& node = nodes[id];
        for (size_t leaf : node.leaves) {
          const SubnetEncoding& enc = candidates[leaf];
          DenseArray f = forward_segment(weights, enc, consumed, enc.size(), feature);
          report.block_forward_count += enc.size() - consumed;
          report.correct[leaf] = count_correct(tail_forward(weights, f), batch.labels);
        }
        for (size_t child_id : node.children) {
          const PrefixNode& child = nodes[child_id];
          DenseArray f = forward_segment(weights, candidates[child.representative], consumed,
                                         child.prefix_length, feature);
          report.block_forward_count += child.prefix_length - consumed;
          ++cached;
          report.peak_cached_features = std::max(report.peak_cached_features, cached);
          if (cached > tree.depth_cap()) {
            throw std::logic_error("feature cache exceeded its depth cap");
          }
          visit(child_id, f, child.prefix_length);
          --cached;
        }
      };
  if (!nodes.empty()) visit(0, head_forward(weights, batch.x), 0);

  report.accuracy.resize(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    report.accuracy[i] = batch.size() ? static_cast<double>(report.correct[i]) /
                                            static_cast<double>(batch.size())
                                      : 0.0;
  }
  return report;
}

EvalReport group_evaluate(const std::vector<SubnetEncoding>& candidates, const Dataset& data,
                          const SupernetWeights& weights, const LatencyTable& table,
                          size_t depth_cap, size_t batch_size) {
  if (candidates.empty()) throw Error("group_evaluate: no candidates");
  if (data.size() == 0) throw Error("group_evaluate: empty evaluation data");
  const PrefixTree tree = build_tree(candidates, table, depth_cap);
  EvalReport total;
  total.correct.assign(candidates.size(), 0);
  for (size_t begin = 0; begin < data.size(); begin += batch_size) {
    const Dataset batch = data.slice(begin, std::min(data.size(), begin + batch_size));
    EvalReport r = dfs_evaluate(tree, batch, weights);
    for (size_t i = 0; i < candidates.size(); ++i) total.correct[i] += r.correct[i];
    total.examples += r.examples;
    total.block_forward_count += r.block_forward_count;
    total.naive_forward_count += r.naive_forward_count;
    total.peak_cached_features = std::max(total.peak_cached_features, r.peak_cached_features);
    total.batches_loaded += 1;
  }
  total.accuracy.resize(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    total.accuracy[i] =
        static_cast<double>(total.correct[i]) / static_cast<double>(total.examples);
  }
  return total;
}

std::vector<double> GroupEvaluator::operator()(const std::vector<SubnetEncoding>& candidates) {
  if (candidates.empty()) return {};
  std::unordered_map<std::string, size_t> slot;
  std::vector<SubnetEncoding> unique;
  std::vector<size_t> where(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    auto [it, inserted] = slot.emplace(candidates[i].arch(), unique.size());
    if (inserted) unique.push_back(candidates[i]);
    where[i] = it->second;
  }
  EvalReport r = group_evaluate(unique, *data_, *weights_, *table_, depth_cap_, batch_size_);
  candidates_evaluated_ += unique.size();
  block_forwards_ += r.block_forward_count;
  naive_forwards_ += r.naive_forward_count;
  std::vector<double> out(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) out[i] = r.accuracy[where[i]];
  return out;
}

}  // namespace edgeadapt
