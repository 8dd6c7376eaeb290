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

#include "edgeadapt/elastic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include <openssl/evp.h>

#include "edgeadapt/evalcache.hpp"

namespace edgeadapt {
namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error("SHA-256 initialisation failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const std::vector<double>& values) {
    unsigned char buf[8];
    for (double v : values) {
      const uint64_t bits = std::bit_cast<uint64_t>(v);
      for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
      EVP_DigestUpdate(ctx_, buf, sizeof buf);
    }
  }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest, &len);
    static const char* kHex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[digest[i] >> 4];
      out += kHex[digest[i] & 15];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

// Teacher features at boundaries 0..upto: F[0] is the head output and
// F[p + 1] the output of original block p.
std::vector<DenseArray> teacher_features(const SupernetWeights& w, const DenseArray& x, int upto) {
  std::vector<DenseArray> f;
  f.reserve(static_cast<size_t>(upto) + 1);
  f.push_back(head_forward(w, x));
  for (int p = 0; p < upto; ++p) f.push_back(units_forward(w.at({p, 0}), f.back()));
  return f;
}

void scale_inplace(DenseArray& a, double s) {
  for (double& v : a.data()) v *= s;
}

StepResult sample_and_apply(SupernetWeights& weights, const UniformSubnetSampler& sampler,
                            const Dataset& batch, Rng& rng, double lr,
                            StepResult (*apply)(SupernetWeights&, const SubnetEncoding&,
                                                const Dataset&, double)) {
  SubnetEncoding enc = sampler.sample(rng);
  if (enc.new_block_count() == 0) enc = sampler.sample(rng);
  return apply(weights, enc, batch, lr);
}

void min_max_latency(const SupernetGraph& graph, const LatencyTable& table, double& lo,
                     double& hi) {
  const int n = graph.size();
  std::vector<double> best_lo(static_cast<size_t>(n) + 1, std::numeric_limits<double>::infinity());
  std::vector<double> best_hi(static_cast<size_t>(n) + 1, -std::numeric_limits<double>::infinity());
  best_lo[0] = best_hi[0] = 0.0;
  for (const auto& [key, v] : graph.variants()) {
    const double t = table.at(key);
    best_lo[key.end()] = std::min(best_lo[key.end()], best_lo[key.start] + t);
    best_hi[key.end()] = std::max(best_hi[key.end()], best_hi[key.start] + t);
  }
  lo = best_lo[n];
  hi = best_hi[n];
}

}  // namespace

ToyArchitecture ToyArchitecture::uniform(size_t layers, size_t dim, size_t width) {
  ToyArchitecture a;
  a.dim = dim;
  a.widths.assign(layers, width);
  return a;
}

ToyClassifier pretrain_toy(const Dataset& data, const ToyArchitecture& arch, int epochs,
                           double lr, uint64_t seed, size_t batch_size) {
  if (data.size() == 0) throw Error("pretrain_toy: empty dataset");
  if (arch.widths.empty()) throw Error("pretrain_toy: architecture has no layers");
  if (!(lr > 0.0)) throw Error("pretrain_toy: learning rate must be positive");
  Rng init = Rng::stream(seed, "pretrain-init");
  Rng order = Rng::stream(seed, "pretrain-shuffle");

  ToyClassifier model;
  model.head = he_linear(data.dim, arch.dim, init);
  for (size_t w : arch.widths) model.layers.push_back(he_bottleneck({arch.dim, w, arch.dim}, init));
  model.tail = he_linear(arch.dim, data.classes, init);
  model.fusion_tags = arch.fusion_tags.empty() ? std::vector<int>(arch.widths.size(), -1)
                                               : arch.fusion_tags;
  model.stages = arch.stages.empty() ? std::vector<int>(arch.widths.size(), 0) : arch.stages;
  if (model.fusion_tags.size() != arch.widths.size() || model.stages.size() != arch.widths.size()) {
    throw Error("pretrain_toy: per-layer tag lists must match the layer count");
  }

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const Dataset shuffled = data.gather(shuffled_indices(data.size(), order));
    for (size_t begin = 0; begin < shuffled.size(); begin += batch_size) {
      const Dataset batch = shuffled.slice(begin, std::min(shuffled.size(), begin + batch_size));
      const DenseArray head_pre = linear_forward(model.head, batch.x, false);
      std::vector<DenseArray> inputs;
      DenseArray f = head_pre;
      for (double& v : f.data()) v = v > 0.0 ? v : 0.0;
      for (const auto& layer : model.layers) {
        inputs.push_back(f);
        f = block_forward(layer, f);
      }
      const DenseArray logits = linear_forward(model.tail, f, false);
      LossResult ce = cross_entropy_loss(logits, batch.labels);
      if (!std::isfinite(ce.loss)) {
        throw Error("pretrain_toy: training diverged (non-finite loss) in epoch " +
                    std::to_string(epoch));
      }
      LinearGradients tail_g = linear_backward(model.tail, f, ce.grads[0]);
      DenseArray grad = std::move(tail_g.input_grad);
      std::vector<BottleneckParams> layer_g(model.layers.size());
      for (size_t k = model.layers.size(); k-- > 0;) {
        BlockGradients g = block_backward(model.layers[k], inputs[k], grad);
        layer_g[k] = std::move(g.params);
        grad = std::move(g.input_grad);
      }
      auto gd = grad.data();
      auto pd = head_pre.data();
      for (size_t i = 0; i < gd.size(); ++i) {
        if (!(pd[i] > 0.0)) gd[i] = 0.0;
      }
      LinearGradients head_g = linear_backward(model.head, batch.x, grad);
      sgd_step(model.tail, tail_g.params, lr);
      for (size_t k = 0; k < model.layers.size(); ++k) sgd_step(model.layers[k], layer_g[k], lr);
      sgd_step(model.head, head_g.params, lr);
    }
  }
  return model;
}

double classifier_accuracy(const ToyClassifier& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  return static_cast<double>(count_correct(classifier_forward(model, data.x), data.labels)) /
         static_cast<double>(data.size());
}

SupernetWeights init_supernet_weights(const ToyClassifier& pretrained, const SupernetGraph& graph,
                                      uint64_t seed, double init_scale) {
  Rng rng = Rng::stream(seed, "branch-init");
  SupernetWeights w;
  w.head = pretrained.head;
  w.tail = pretrained.tail;
  for (const auto& [key, v] : graph.variants()) {
    BlockParams units;
    if (key.is_original()) {
      const BlockPosition& pos = graph.positions()[static_cast<size_t>(key.start)];
      for (size_t l = pos.first_layer; l < pos.first_layer + pos.layer_count; ++l) {
        if (l >= pretrained.layers.size()) throw Error("graph does not match the pretrained model");
        units.push_back(pretrained.layers[l]);
      }
    } else {
      for (const UnitShape& u : v.units) units.push_back(random_bottleneck(u, init_scale, rng));
    }
    w.blocks.emplace(key, std::move(units));
  }
  return w;
}

std::string frozen_params_hash(const SupernetWeights& weights) {
  Sha256 sha;
  for (const auto* t : weights.head.tensors()) sha.update(*t);
  for (const auto* t : weights.tail.tensors()) sha.update(*t);
  for (const auto& [key, units] : weights.blocks) {
    if (!key.is_original()) continue;
    for (const auto& u : units) {
      for (const auto* t : u.tensors()) sha.update(*t);
    }
  }
  return sha.hex();
}

std::vector<LatencyBin> default_latency_bins(const SupernetGraph& graph,
                                             const LatencyTable& table, size_t count) {
  if (count == 0) throw Error("need at least one latency bin");
  double lo = 0.0, hi = 0.0;
  min_max_latency(graph, table, lo, hi);
  hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
  std::vector<LatencyBin> bins;
  for (size_t i = 0; i < count; ++i) {
    LatencyBin b;
    b.low = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count);
    b.high = i + 1 == count ? hi : lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(count);
    bins.push_back(b);
  }
  return bins;
}

void TrainConfig::validate() const {
  if (distill_epochs < 0 || tune_epochs < 0) throw Error("epoch counts must be non-negative");
  if (!(lr_distill > 0.0) || !(lr_tune > 0.0)) throw Error("learning rates must be positive");
  if (!(lr_tune < lr_distill)) throw Error("tuning learning rate must be below the distillation rate");
  if (batch_size == 0) throw Error("batch size must be positive");
  for (size_t i = 0; i < latency_bins.size(); ++i) {
    if (!(latency_bins[i].low < latency_bins[i].high)) throw Error("latency bin is empty");
    if (i > 0 && latency_bins[i].low < latency_bins[i - 1].high) {
      throw Error("latency bins must be ascending and non-overlapping");
    }
  }
}

StepResult distill_on(SupernetWeights& weights, const SubnetEncoding& enc, const Dataset& batch,
                      double lr) {
  StepResult result;
  result.subnet = enc;
  if (enc.new_block_count() == 0 || batch.size() == 0) return result;

  int upto = 0;
  for (const VariantKey& key : enc.choices()) {
    if (!key.is_original()) upto = std::max(upto, key.end());
  }
  const std::vector<DenseArray> teacher = teacher_features(weights, batch.x, upto);

  std::vector<VariantKey> branches;
  std::vector<DenseArray> targets, students;
  for (const VariantKey& key : enc.choices()) {
    if (key.is_original()) continue;
    branches.push_back(key);
    targets.push_back(teacher[static_cast<size_t>(key.end())]);
    students.push_back(units_forward(weights.at(key), teacher[static_cast<size_t>(key.start)]));
  }
  LossResult loss = distillation_loss(targets, students);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (size_t i = 0; i < branches.size(); ++i) {
    scale_inplace(loss.grads[i], inv_batch);
    BlockParams& units = weights.blocks.at(branches[i]);
    UnitsGradients g =
        units_backward(units, teacher[static_cast<size_t>(branches[i].start)], loss.grads[i]);
    for (size_t u = 0; u < units.size(); ++u) sgd_step(units[u], g.params[u], lr);
  }
  result.applied = true;
  result.loss = loss.loss * inv_batch;
  return result;
}

StepResult tune_on(SupernetWeights& weights, const SubnetEncoding& enc, const Dataset& batch,
                   double lr) {
  StepResult result;
  result.subnet = enc;
  if (enc.new_block_count() == 0 || batch.size() == 0) return result;

  std::vector<DenseArray> inputs;
  DenseArray f = head_forward(weights, batch.x);
  for (const VariantKey& key : enc.choices()) {
    inputs.push_back(f);
    f = units_forward(weights.at(key), f);
  }
  LossResult ce = cross_entropy_loss(tail_forward(weights, f), batch.labels);
  DenseArray grad = linear_backward(weights.tail, f, ce.grads[0]).input_grad;

  size_t first_new = enc.size();
  for (size_t k = 0; k < enc.size(); ++k) {
    if (!enc[k].is_original()) {
      first_new = k;
      break;
    }
  }
  std::vector<std::pair<VariantKey, BlockParams>> updates;
  for (size_t k = enc.size(); k-- > first_new;) {
    UnitsGradients g = units_backward(weights.at(enc[k]), inputs[k], grad);
    if (!enc[k].is_original()) updates.emplace_back(enc[k], std::move(g.params));
    grad = std::move(g.input_grad);
  }
  for (auto& [key, grads] : updates) {
    BlockParams& units = weights.blocks.at(key);
    for (size_t u = 0; u < units.size(); ++u) sgd_step(units[u], grads[u], lr);
  }
  result.applied = true;
  result.loss = ce.loss;
  return result;
}

StepResult distill_step(SupernetWeights& weights, const UniformSubnetSampler& sampler,
                        const Dataset& batch, Rng& rng, double lr) {
  return sample_and_apply(weights, sampler, batch, rng, lr, &distill_on);
}

StepResult tune_step(SupernetWeights& weights, const UniformSubnetSampler& sampler,
                     const Dataset& batch, Rng& rng, double lr) {
  return sample_and_apply(weights, sampler, batch, rng, lr, &tune_on);
}

LatencyRangeReport evaluate_latency_bins(const SupernetWeights& weights,
                                         const LatencyTable& table,
                                         const std::vector<LatencyBin>& bins,
                                         const std::vector<SubnetEncoding>& subnets,
                                         const Dataset& eval_data) {
  LatencyRangeReport report;
  report.subnets = subnets;
  if (subnets.empty()) return report;
  GroupEvaluator evaluate(weights, eval_data, table, /*depth_cap=*/64);
  report.accuracies = evaluate(subnets);
  std::vector<BinAccuracy> all(bins.size());
  for (size_t b = 0; b < bins.size(); ++b) all[b].bin = bins[b];
  for (size_t i = 0; i < subnets.size(); ++i) {
    const double lat = subnet_latency(table, subnets[i]);
    report.latencies.push_back(lat);
    bool placed = false;
    for (auto& b : all) {
      if (lat >= b.bin.low && lat < b.bin.high) {
        ++b.count;
        b.mean_accuracy += report.accuracies[i];
        placed = true;
        break;
      }
    }
    if (!placed) ++report.unbinned;
  }
  for (auto& b : all) {
    if (b.count == 0) continue;
    b.mean_accuracy /= static_cast<double>(b.count);
    report.bins.push_back(b);
  }
  return report;
}

LatencyRangeReport latency_range_accuracy(const SupernetWeights& weights,
                                          const SupernetGraph& graph,
                                          const LatencyTable& table,
                                          const std::vector<LatencyBin>& bins,
                                          size_t sample_count, const Dataset& eval_data,
                                          uint64_t seed) {
  if (sample_count == 0) throw Error("latency_range_accuracy: sample_count must be positive");
  Rng rng = Rng::stream(seed, "range-eval");
  UniformSubnetSampler sampler(graph);
  std::vector<SubnetEncoding> subnets;
  for (size_t i = 0; i < sample_count; ++i) subnets.push_back(sampler.sample(rng));
  return evaluate_latency_bins(weights, table, bins, subnets, eval_data);
}

TrainResult train_supernet(SupernetWeights initial, const SupernetGraph& graph,
                           const TrainConfig& config, const Dataset& train_data,
                           const Dataset& eval_data, const LatencyTable& table) {
  config.validate();
  if (train_data.size() == 0) throw Error("train_supernet: empty training data");
  TrainResult out;
  out.weights = std::move(initial);
  out.report.frozen_hash_before = frozen_params_hash(out.weights);

  const std::vector<LatencyBin> bins =
      config.latency_bins.empty() ? default_latency_bins(graph, table, 5) : config.latency_bins;
  const UniformSubnetSampler sampler(graph);
  Rng eval_rng = Rng::stream(config.seed, "eval-subnets");
  std::vector<SubnetEncoding> eval_subnets;
  for (size_t i = 0; i < config.eval_subnet_samples; ++i) eval_subnets.push_back(sampler.sample(eval_rng));
  Rng step_rng = Rng::stream(config.seed, "steps");
  Rng order_rng = Rng::stream(config.seed, "shuffle");

  LatencyRangeReport last;
  bool evaluated = false;
  int epoch_no = 0;
  auto run_phase = [&](const char* phase, int epochs, double lr, bool distill) {
    for (int e = 0; e < epochs; ++e) {
      const Dataset shuffled = train_data.gather(shuffled_indices(train_data.size(), order_rng));
      double loss_sum = 0.0;
      size_t applied = 0;
      for (size_t begin = 0; begin < shuffled.size(); begin += config.batch_size) {
        const Dataset batch =
            shuffled.slice(begin, std::min(shuffled.size(), begin + config.batch_size));
        StepResult r = distill ? distill_step(out.weights, sampler, batch, step_rng, lr)
                               : tune_step(out.weights, sampler, batch, step_rng, lr);
        if (!r.applied) continue;
        if (!std::isfinite(r.loss)) {
          throw Error(std::string("train_supernet: ") + phase + " loss became non-finite");
        }
        loss_sum += r.loss;
        ++applied;
      }
      EpochRecord rec;
      rec.epoch = ++epoch_no;
      rec.phase = phase;
      rec.loss = applied ? loss_sum / static_cast<double>(applied) : 0.0;
      if (eval_data.size() > 0) {
        last = evaluate_latency_bins(out.weights, table, bins, eval_subnets, eval_data);
        evaluated = true;
        rec.bins = last.bins;
      }
      out.report.epochs.push_back(std::move(rec));
    }
  };
  run_phase("distill", config.distill_epochs, config.lr_distill, true);
  run_phase("tune", config.tune_epochs, config.lr_tune, false);

  if (!evaluated && eval_data.size() > 0) {
    last = evaluate_latency_bins(out.weights, table, bins, eval_subnets, eval_data);
  }
  if (!last.accuracies.empty()) {
    double sum = 0.0;
    for (double a : last.accuracies) sum += a;
    out.report.mean_subnet_accuracy = sum / static_cast<double>(last.accuracies.size());
  }
  out.report.frozen_hash_after = frozen_params_hash(out.weights);
  if (out.report.frozen_hash_after != out.report.frozen_hash_before) {
    throw std::logic_error("frozen original parameters changed during supernet training");
  }
  return out;
}

}  // namespace edgeadapt
