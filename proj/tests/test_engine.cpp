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

#include <algorithm>
#include <cmath>
#include <functional>

#include <doctest.h>

#include "edgeadapt/dataset.hpp"
#include "edgeadapt/elastic.hpp"
#include "edgeadapt/engine.hpp"
#include "toy.hpp"

using namespace edgeadapt;

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;
// Relative error floor: below this magnitude both values count as zero.
constexpr double kFloor = 1e-4;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kFloor});
}

DenseArray random_array(size_t rows, size_t cols, Rng& rng, double scale = 1.0) {
  DenseArray a({rows, cols});
  for (double& v : a.values()) v = rng.normal(0.0, scale);
  return a;
}

BottleneckParams random_params(UnitShape s, Rng& rng) {
  BottleneckParams p = BottleneckParams::zeros(s);
  for (auto* t : p.tensors()) {
    for (double& v : *t) v = rng.normal(0.0, 0.5);
  }
  return p;
}

// Scalar-loop reference of one bottleneck unit.
std::vector<std::vector<double>> naive_block(const BottleneckParams& p,
                                             const std::vector<std::vector<double>>& x,
                                             std::vector<std::vector<double>>* pre1 = nullptr,
                                             std::vector<std::vector<double>>* pre2 = nullptr) {
  std::vector<std::vector<double>> y;
  for (const auto& row : x) {
    std::vector<double> h(p.width), z1(p.width), out(p.out_dim), z2(p.out_dim);
    for (size_t j = 0; j < p.width; ++j) {
      double s = p.b1[j];
      for (size_t i = 0; i < p.in_dim; ++i) s += row[i] * p.w1[i * p.width + j];
      z1[j] = s;
      h[j] = s > 0 ? s : 0;
    }
    for (size_t k = 0; k < p.out_dim; ++k) {
      double s = p.b2[k];
      for (size_t j = 0; j < p.width; ++j) s += h[j] * p.w2[j * p.out_dim + k];
      z2[k] = s;
      out[k] = (p.linear_out || s > 0) ? s : 0;
    }
    if (pre1) pre1->push_back(z1);
    if (pre2) pre2->push_back(z2);
    y.push_back(out);
  }
  return y;
}

std::vector<std::vector<double>> rows_of(const DenseArray& a) {
  std::vector<std::vector<double>> out;
  for (size_t r = 0; r < a.rows(); ++r) out.emplace_back(a.row(r).begin(), a.row(r).end());
  return out;
}

double dot(const DenseArray& a, const DenseArray& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

// Central difference of f with respect to *param.
double numeric_grad(double& param, const std::function<double()>& f) {
  const double saved = param;
  param = saved + kStep;
  const double up = f();
  param = saved - kStep;
  const double down = f();
  param = saved;
  return (up - down) / (2 * kStep);
}

double min_abs(const std::vector<std::vector<double>>& v) {
  double m = INFINITY;
  for (const auto& r : v)
    for (double x : r) m = std::min(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("block_forward: identity and zero") {
  BottleneckParams p = BottleneckParams::zeros({3, 3, 3});
  for (size_t i = 0; i < 3; ++i) p.w1[i * 3 + i] = p.w2[i * 3 + i] = 1.0;
  DenseArray x({2, 3}, std::vector<double>{0.5, 1.0, 2.0, 0.0, 3.0, 0.25});
  CHECK(block_forward(p, x) == x);

  Rng rng(3);
  BottleneckParams q = random_params({3, 4, 2}, rng);
  std::fill(q.b1.begin(), q.b1.end(), 0.0);
  std::fill(q.b2.begin(), q.b2.end(), 0.0);
  DenseArray zeros({1, 3});
  const DenseArray out = block_forward(q, zeros);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("block_forward matches scalar loops") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    BottleneckParams p = random_params({5, 7, 4}, rng);
    p.linear_out = seed % 2 == 1;
    DenseArray x = random_array(3, 5, rng);
    auto ref = naive_block(p, rows_of(x));
    DenseArray y = block_forward(p, x);
    for (size_t r = 0; r < 3; ++r)
      for (size_t c = 0; c < 4; ++c) CHECK(std::abs(y.at(r, c) - ref[r][c]) <= 1e-12);
  }
}

TEST_CASE("block_backward matches finite differences over 50 seeds") {
  int checked = 0;
  for (uint64_t seed = 0; checked < 50; ++seed) {
    REQUIRE(seed < 500);
    Rng rng(Rng::derive(seed, "fd-block"));
    BottleneckParams p = random_params({4, 6, 3}, rng);
    DenseArray x = random_array(3, 4, rng);
    DenseArray up = random_array(3, 3, rng);
    std::vector<std::vector<double>> z1, z2;
    naive_block(p, rows_of(x), &z1, &z2);
    // Skip draws within a step of a rectifier kink.
    if (min_abs(z1) < 1e-3 || min_abs(z2) < 1e-3) continue;
    ++checked;
    BlockGradients g = block_backward(p, x, up);
    auto f = [&] { return dot(block_forward(p, x), up); };
    auto pt = p.tensors();
    auto gt = g.params.tensors();
    for (size_t t = 0; t < pt.size(); ++t) {
      for (size_t i = 0; i < pt[t]->size(); ++i) {
        const double num = numeric_grad((*pt[t])[i], f);
        CHECK(rel_err((*gt[t])[i], num) <= kRelTol);
      }
    }
    for (size_t i = 0; i < x.size(); ++i) {
      const double num = numeric_grad(x.values()[i], f);
      CHECK(rel_err(g.input_grad.values()[i], num) <= kRelTol);
    }
  }
}

TEST_CASE("units and linear backward match finite differences over 50 seeds") {
  int checked = 0;
  for (uint64_t seed = 0; checked < 50; ++seed) {
    REQUIRE(seed < 500);
    Rng rng(Rng::derive(seed, "fd-units"));
    BlockParams units = {random_params({4, 5, 6}, rng), random_params({6, 3, 4}, rng)};
    DenseArray x = random_array(2, 4, rng);
    DenseArray up = random_array(2, 4, rng);
    std::vector<std::vector<double>> a1, a2, b1, b2;
    auto mid = naive_block(units[0], rows_of(x), &a1, &a2);
    naive_block(units[1], mid, &b1, &b2);
    if (std::min({min_abs(a1), min_abs(a2), min_abs(b1), min_abs(b2)}) < 1e-3) continue;
    ++checked;
    UnitsGradients g = units_backward(units, x, up);
    auto f = [&] { return dot(units_forward(units, x), up); };
    for (size_t u = 0; u < units.size(); ++u) {
      auto pt = units[u].tensors();
      auto gt = g.params[u].tensors();
      for (size_t t = 0; t < pt.size(); ++t)
        for (size_t i = 0; i < pt[t]->size(); ++i)
          CHECK(rel_err((*gt[t])[i], numeric_grad((*pt[t])[i], f)) <= kRelTol);
    }
    for (size_t i = 0; i < x.size(); ++i)
      CHECK(rel_err(g.input_grad.values()[i], numeric_grad(x.values()[i], f)) <= kRelTol);

    LinearParams lin = LinearParams::zeros(4, 3);
    for (double& v : lin.weight) v = rng.normal();
    for (double& v : lin.bias) v = rng.normal();
    DenseArray lup = random_array(2, 3, rng);
    LinearGradients lg = linear_backward(lin, x, lup);
    auto lf = [&] { return dot(linear_forward(lin, x, false), lup); };
    for (size_t i = 0; i < lin.weight.size(); ++i)
      CHECK(rel_err(lg.params.weight[i], numeric_grad(lin.weight[i], lf)) <= kRelTol);
    for (size_t i = 0; i < lin.bias.size(); ++i)
      CHECK(rel_err(lg.params.bias[i], numeric_grad(lin.bias[i], lf)) <= kRelTol);
    for (size_t i = 0; i < x.size(); ++i)
      CHECK(rel_err(lg.input_grad.values()[i], numeric_grad(x.values()[i], lf)) <= kRelTol);
  }
}

TEST_CASE("block_backward: zero upstream and dead units") {
  Rng rng(11);
  BottleneckParams p = random_params({3, 4, 2}, rng);
  DenseArray x = random_array(2, 3, rng);
  BlockGradients g = block_backward(p, x, DenseArray({2, 2}));
  for (const auto* t : g.params.tensors())
    for (double v : *t) CHECK(v == 0.0);
  for (double v : g.input_grad.values()) CHECK(v == 0.0);

  // Hidden unit 1 is dead for every row: its W1 column gets no gradient.
  p.b1[1] = -1e6;
  g = block_backward(p, x, random_array(2, 2, rng));
  for (size_t i = 0; i < 3; ++i) CHECK(g.params.w1[i * 4 + 1] == 0.0);
  CHECK(g.params.b1[1] == 0.0);
}

TEST_CASE("distillation_loss examples") {
  std::vector<DenseArray> t = {DenseArray({1, 2}, std::vector<double>{1, 2})};
  std::vector<DenseArray> s = {DenseArray({1, 2}, std::vector<double>{1, 0})};
  CHECK(distillation_loss(t, s).loss == doctest::Approx(4.0).epsilon(1e-15));

  LossResult same = distillation_loss(t, t);
  CHECK(same.loss == 0.0);
  for (double v : same.grads[0].values()) CHECK(v == 0.0);

  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(Rng::derive(seed, "fd-distill"));
    std::vector<DenseArray> tt = {random_array(3, 4, rng), random_array(3, 2, rng)};
    std::vector<DenseArray> ss = {random_array(3, 4, rng), random_array(3, 2, rng)};
    double ref = 0;
    for (size_t m = 0; m < 2; ++m)
      for (size_t k = 0; k < tt[m].size(); ++k) {
        const double d = tt[m].values()[k] - ss[m].values()[k];
        ref += d * d;
      }
    ref /= 2;
    LossResult r = distillation_loss(tt, ss);
    CHECK(std::abs(r.loss - ref) <= 1e-12);
    auto f = [&] { return distillation_loss(tt, ss).loss; };
    for (size_t m = 0; m < 2; ++m)
      for (size_t k = 0; k < ss[m].size(); ++k)
        CHECK(rel_err(r.grads[m].values()[k], numeric_grad(ss[m].values()[k], f)) <= kRelTol);
  }
  std::vector<DenseArray> none;
  CHECK_THROWS_AS(distillation_loss(none, none), Error);
}

TEST_CASE("cross_entropy_loss examples and gradients") {
  DenseArray uniform({1, 2}, std::vector<double>{0.3, 0.3});
  std::vector<int> label0 = {0};
  CHECK(cross_entropy_loss(uniform, label0).loss == doctest::Approx(std::log(2.0)));

  DenseArray sure({1, 3}, std::vector<double>{0, 1e4, 0});
  std::vector<int> label1 = {1};
  CHECK(cross_entropy_loss(sure, label1).loss < 1e-12);

  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(Rng::derive(seed, "fd-ce"));
    DenseArray logits = random_array(4, 5, rng, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.below(5)));
    LossResult r = cross_entropy_loss(logits, labels);
    auto f = [&] { return cross_entropy_loss(logits, labels).loss; };
    for (size_t k = 0; k < logits.size(); ++k)
      CHECK(rel_err(r.grads[0].values()[k], numeric_grad(logits.values()[k], f)) <= kRelTol);
  }
  std::vector<int> bad = {7};
  CHECK_THROWS_AS(cross_entropy_loss(uniform, bad), Error);
}

TEST_CASE("sgd_step") {
  LinearParams p = LinearParams::zeros(1, 1);
  p.weight[0] = 1.0;
  LinearParams g = LinearParams::zeros(1, 1);
  g.weight[0] = 2.0;
  sgd_step(p, g, 0.1);
  CHECK(p.weight[0] == doctest::Approx(0.8));

  Rng rng(5);
  BottleneckParams q = random_params({2, 3, 2}, rng);
  const BottleneckParams before = q;
  sgd_step(q, BottleneckParams::zeros({2, 3, 2}), 0.5);
  CHECK(q == before);

  // f(w) = a/2 (w - c)^2 decreases every step when lr < 2/a.
  const double a = 4.0, c = 1.5;
  LinearParams w = LinearParams::zeros(1, 1);
  w.weight[0] = -3.0;
  double prev = a / 2 * (w.weight[0] - c) * (w.weight[0] - c);
  for (int k = 0; k < 30; ++k) {
    LinearParams grad = LinearParams::zeros(1, 1);
    grad.weight[0] = a * (w.weight[0] - c);
    sgd_step(w, grad, 0.4);
    const double cur = a / 2 * (w.weight[0] - c) * (w.weight[0] - c);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("subnet_forward: path identity, batch independence, merged composition") {
  Dataset data = make_blobs(3, 4, 20, 3.0, 1);
  ToyClassifier model = pretrain_toy(data, ToyArchitecture::uniform(4, 6, 8), 2, 0.05, 2);
  SupernetGraph graph = expand_graph(partition_blocks(model.chain_layers(), 1.0), 2,
                                     std::vector<double>{0.5});
  SupernetWeights w = init_supernet_weights(model, graph, 3, 0.3);

  DenseArray ref = classifier_forward(model, data.x);
  CHECK(subnet_forward(w, all_original_subnet(graph), data.x).logits == ref);

  for (uint64_t s = 0; s < 10; ++s) {
    SubnetEncoding enc = sample_uniform_subnet(graph, s);
    DenseArray batch = data.x.slice_rows(0, 8);
    DenseArray full = subnet_forward(w, enc, batch).logits;
    for (size_t r = 0; r < 8; ++r) {
      DenseArray one = subnet_forward(w, enc, batch.slice_rows(r, r + 1)).logits;
      for (size_t c = 0; c < one.cols(); ++c) CHECK(std::abs(one.at(0, c) - full.at(r, c)) <= 1e-12);
    }
  }

  SubnetEncoding merged = SubnetEncoding::parse("0:0,1:1,3:0");
  DenseArray h = linear_forward(w.head, data.x, true);
  h = units_forward(w.at({0, 0}), h);
  h = units_forward(w.at({1, 1}), h);
  h = units_forward(w.at({3, 0}), h);
  CHECK(subnet_forward(w, merged, data.x).logits == linear_forward(w.tail, h, false));

  SubnetOutput cap = subnet_forward(w, merged, data.x, true);
  CHECK(cap.features.size() == 3);
  CHECK(cap.features[2] == h);
  CHECK(forward_segment(w, merged, 1, 3, cap.features[0]) == h);

  SupernetWeights partial = w;
  partial.blocks.erase({1, 1});
  CHECK_THROWS_AS(subnet_forward(partial, merged, data.x), Error);
}

TEST_CASE("argmax and count_correct") {
  DenseArray logits({3, 3}, std::vector<double>{1, 5, 2, 9, 0, 0, 0, 0, 3});
  CHECK(argmax_rows(logits) == std::vector<int>{1, 0, 2});
  std::vector<int> labels = {1, 1, 2};
  CHECK(count_correct(logits, labels) == 2);
}
