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

#include "edgeadapt/engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace edgeadapt {
namespace {

size_t shape_product(const std::vector<size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
}

void require_cols(const DenseArray& x, size_t dim, const char* what) {
  if (x.shape().empty() || x.cols() != dim) {
    throw Error(std::string(what) + ": expected feature dimension " + std::to_string(dim) +
                ", got " + std::to_string(x.shape().empty() ? 0 : x.cols()));
  }
}

// out[b, :] = bias + x[b, :] W, summing over the input axis in order.
DenseArray affine(const DenseArray& x, const std::vector<double>& w,
                  const std::vector<double>& bias, size_t in_dim, size_t out_dim) {
  const size_t rows = x.rows();
  DenseArray out({rows, out_dim});
  const double* xd = x.data().data();
  double* od = out.data().data();
  for (size_t r = 0; r < rows; ++r) {
    double* orow = od + r * out_dim;
    std::copy(bias.begin(), bias.end(), orow);
    const double* xrow = xd + r * in_dim;
    for (size_t i = 0; i < in_dim; ++i) {
      const double xi = xrow[i];
      const double* wrow = w.data() + i * out_dim;
      for (size_t j = 0; j < out_dim; ++j) orow[j] += xi * wrow[j];
    }
  }
  return out;
}

void rectify_inplace(DenseArray& z) {
  for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
}

DenseArray rectified(const DenseArray& z) {
  DenseArray out = z;
  rectify_inplace(out);
  return out;
}

// Gradient of an affine map: dW = x^T g, db = colsum(g), dx = g W^T.
void affine_backward(const DenseArray& x, const DenseArray& g, const std::vector<double>& w,
                     size_t in_dim, size_t out_dim, std::vector<double>& dw,
                     std::vector<double>& db, DenseArray* dx) {
  const size_t rows = x.rows();
  dw.assign(in_dim * out_dim, 0.0);
  db.assign(out_dim, 0.0);
  const double* xd = x.data().data();
  const double* gd = g.data().data();
  for (size_t r = 0; r < rows; ++r) {
    const double* grow = gd + r * out_dim;
    const double* xrow = xd + r * in_dim;
    for (size_t j = 0; j < out_dim; ++j) db[j] += grow[j];
    for (size_t i = 0; i < in_dim; ++i) {
      const double xi = xrow[i];
      double* dwrow = dw.data() + i * out_dim;
      for (size_t j = 0; j < out_dim; ++j) dwrow[j] += xi * grow[j];
    }
  }
  if (dx) {
    *dx = DenseArray({rows, in_dim});
    double* dxd = dx->data().data();
    for (size_t r = 0; r < rows; ++r) {
      const double* grow = gd + r * out_dim;
      for (size_t i = 0; i < in_dim; ++i) {
        const double* wrow = w.data() + i * out_dim;
        double acc = 0.0;
        for (size_t j = 0; j < out_dim; ++j) acc += grow[j] * wrow[j];
        dxd[r * in_dim + i] = acc;
      }
    }
  }
}

void mask_by_positive(DenseArray& g, const DenseArray& pre) {
  auto gd = g.data();
  auto pd = pre.data();
  for (size_t k = 0; k < gd.size(); ++k) {
    if (!(pd[k] > 0.0)) gd[k] = 0.0;
  }
}

void axpy(std::vector<double>& p, const std::vector<double>& g, double lr) {
  if (g.empty()) return;
  if (g.size() != p.size()) throw Error("sgd_step: gradient shape mismatch");
  for (size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
}

void fill_uniform(std::vector<double>& v, double scale, Rng& rng) {
  for (double& x : v) x = rng.uniform(-scale, scale);
}

}  // namespace

DenseArray::DenseArray(std::vector<size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

DenseArray::DenseArray(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw Error("DenseArray: data length " + std::to_string(data_.size()) +
                " does not match shape product " + std::to_string(shape_product(shape_)));
  }
}

size_t DenseArray::rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }

size_t DenseArray::cols() const {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return shape_[0];
  return shape_product({shape_.begin() + 1, shape_.end()});
}

DenseArray DenseArray::slice_rows(size_t begin, size_t end) const {
  const size_t c = cols();
  std::vector<size_t> shape = shape_.size() >= 2 ? shape_ : std::vector<size_t>{1, c};
  shape[0] = end - begin;
  return DenseArray(std::move(shape),
                    std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                        data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

LinearParams LinearParams::zeros(size_t in_dim, size_t out_dim) {
  return {in_dim, out_dim, std::vector<double>(in_dim * out_dim, 0.0),
          std::vector<double>(out_dim, 0.0)};
}

BottleneckParams BottleneckParams::zeros(const UnitShape& s) {
  BottleneckParams p;
  p.in_dim = s.in_dim;
  p.width = s.width;
  p.out_dim = s.out_dim;
  p.w1.assign(s.in_dim * s.width, 0.0);
  p.b1.assign(s.width, 0.0);
  p.w2.assign(s.width * s.out_dim, 0.0);
  p.b2.assign(s.out_dim, 0.0);
  return p;
}

DenseArray linear_forward(const LinearParams& p, const DenseArray& x, bool rectify) {
  require_cols(x, p.in_dim, "linear_forward");
  DenseArray y = affine(x, p.weight, p.bias, p.in_dim, p.out_dim);
  if (rectify) rectify_inplace(y);
  return y;
}

LinearGradients linear_backward(const LinearParams& p, const DenseArray& x,
                                const DenseArray& upstream) {
  require_cols(x, p.in_dim, "linear_backward");
  require_cols(upstream, p.out_dim, "linear_backward upstream");
  LinearGradients g;
  g.params.in_dim = p.in_dim;
  g.params.out_dim = p.out_dim;
  affine_backward(x, upstream, p.weight, p.in_dim, p.out_dim, g.params.weight, g.params.bias,
                  &g.input_grad);
  return g;
}

DenseArray block_forward(const BottleneckParams& p, const DenseArray& x) {
  require_cols(x, p.in_dim, "block_forward");
  DenseArray hidden = affine(x, p.w1, p.b1, p.in_dim, p.width);
  rectify_inplace(hidden);
  DenseArray y = affine(hidden, p.w2, p.b2, p.width, p.out_dim);
  if (!p.linear_out) rectify_inplace(y);
  return y;
}

BlockGradients block_backward(const BottleneckParams& p, const DenseArray& x,
                              const DenseArray& upstream) {
  require_cols(x, p.in_dim, "block_backward");
  require_cols(upstream, p.out_dim, "block_backward upstream");
  if (upstream.rows() != x.rows()) throw Error("block_backward: batch size mismatch");

  const DenseArray z1 = affine(x, p.w1, p.b1, p.in_dim, p.width);
  const DenseArray h = rectified(z1);
  DenseArray dz2 = upstream;
  if (!p.linear_out) {
    const DenseArray z2 = affine(h, p.w2, p.b2, p.width, p.out_dim);
    mask_by_positive(dz2, z2);
  }

  BlockGradients g;
  g.params = BottleneckParams::zeros(p.shape());
  g.params.linear_out = p.linear_out;
  DenseArray dh;
  affine_backward(h, dz2, p.w2, p.width, p.out_dim, g.params.w2, g.params.b2, &dh);
  mask_by_positive(dh, z1);
  affine_backward(x, dh, p.w1, p.in_dim, p.width, g.params.w1, g.params.b1, &g.input_grad);
  return g;
}

DenseArray units_forward(std::span<const BottleneckParams> units, const DenseArray& x) {
  DenseArray y = x;
  for (const auto& u : units) y = block_forward(u, y);
  return y;
}

UnitsGradients units_backward(std::span<const BottleneckParams> units, const DenseArray& x,
                              const DenseArray& upstream) {
  std::vector<DenseArray> inputs;
  inputs.reserve(units.size());
  DenseArray y = x;
  for (const auto& u : units) {
    inputs.push_back(y);
    y = block_forward(u, y);
  }
  UnitsGradients g;
  g.params.resize(units.size());
  DenseArray grad = upstream;
  for (size_t k = units.size(); k-- > 0;) {
    BlockGradients bg = block_backward(units[k], inputs[k], grad);
    g.params[k] = std::move(bg.params);
    grad = std::move(bg.input_grad);
  }
  g.input_grad = std::move(grad);
  return g;
}

LossResult distillation_loss(std::span<const DenseArray> teacher,
                             std::span<const DenseArray> student) {
  if (teacher.empty()) throw Error("distillation_loss: no feature pairs");
  if (teacher.size() != student.size()) {
    throw Error("distillation_loss: teacher and student lists differ in length");
  }
  const double m = static_cast<double>(teacher.size());
  LossResult out;
  for (size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].shape() != student[i].shape()) {
      throw Error("distillation_loss: shape mismatch in pair " + std::to_string(i));
    }
    auto t = teacher[i].data();
    auto s = student[i].data();
    DenseArray grad(student[i].shape());
    auto gd = grad.data();
    double sq = 0.0;
    for (size_t k = 0; k < t.size(); ++k) {
      const double diff = s[k] - t[k];
      sq += diff * diff;
      gd[k] = 2.0 / m * diff;
    }
    out.loss += sq;
    out.grads.push_back(std::move(grad));
  }
  out.loss /= m;
  return out;
}

LossResult cross_entropy_loss(const DenseArray& logits, std::span<const int> labels) {
  const size_t rows = logits.rows();
  const size_t k = logits.cols();
  if (rows == 0 || labels.empty()) throw Error("cross_entropy_loss: empty batch");
  if (labels.size() != rows) throw Error("cross_entropy_loss: label count mismatch");
  LossResult out;
  DenseArray grad(logits.shape());
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<size_t>(label) >= k) {
      throw Error("cross_entropy_loss: label " + std::to_string(label) + " out of range");
    }
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - mx);
    const double log_denom = std::log(denom);
    out.loss += -(row[label] - mx - log_denom);
    for (size_t c = 0; c < k; ++c) {
      const double prob = std::exp(row[c] - mx - log_denom);
      grad.at(r, c) = (prob - (static_cast<size_t>(label) == c ? 1.0 : 0.0)) * inv_rows;
    }
  }
  out.loss *= inv_rows;
  out.grads.push_back(std::move(grad));
  return out;
}

void sgd_step(BottleneckParams& p, const BottleneckParams& grad, double lr) {
  auto pt = p.tensors();
  auto gt = grad.tensors();
  for (size_t k = 0; k < pt.size(); ++k) axpy(*pt[k], *gt[k], lr);
}

void sgd_step(LinearParams& p, const LinearParams& grad, double lr) {
  axpy(p.weight, grad.weight, lr);
  axpy(p.bias, grad.bias, lr);
}

std::vector<int> argmax_rows(const DenseArray& logits) {
  std::vector<int> out(logits.rows());
  for (size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

size_t count_correct(const DenseArray& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  size_t correct = 0;
  for (size_t r = 0; r < pred.size(); ++r) correct += pred[r] == labels[r] ? 1 : 0;
  return correct;
}

BottleneckParams random_bottleneck(const UnitShape& shape, double scale, Rng& rng) {
  BottleneckParams p = BottleneckParams::zeros(shape);
  for (auto* t : p.tensors()) fill_uniform(*t, scale, rng);
  return p;
}

BottleneckParams he_bottleneck(const UnitShape& shape, Rng& rng) {
  BottleneckParams p = BottleneckParams::zeros(shape);
  fill_uniform(p.w1, std::sqrt(6.0 / static_cast<double>(shape.in_dim)), rng);
  fill_uniform(p.w2, std::sqrt(6.0 / static_cast<double>(shape.width)), rng);
  for (double& b : p.b1) b = 0.01;
  for (double& b : p.b2) b = 0.01;
  return p;
}

LinearParams he_linear(size_t in_dim, size_t out_dim, Rng& rng) {
  LinearParams p = LinearParams::zeros(in_dim, out_dim);
  fill_uniform(p.weight, std::sqrt(6.0 / static_cast<double>(in_dim)), rng);
  return p;
}

std::vector<ChainLayer> ToyClassifier::chain_layers() const {
  std::vector<ChainLayer> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    ChainLayer l;
    l.in_dim = layers[i].in_dim;
    l.out_dim = layers[i].out_dim;
    l.width = layers[i].width;
    l.param_size = layers[i].param_count();
    l.fusion_tag = i < fusion_tags.size() ? fusion_tags[i] : -1;
    l.stage = i < stages.size() ? stages[i] : 0;
    out.push_back(l);
  }
  return out;
}

DenseArray classifier_forward(const ToyClassifier& model, const DenseArray& x) {
  DenseArray f = linear_forward(model.head, x, true);
  for (const auto& layer : model.layers) f = block_forward(layer, f);
  return linear_forward(model.tail, f, false);
}

const BlockParams* SupernetWeights::find(VariantKey key) const {
  auto it = blocks.find(key);
  return it == blocks.end() ? nullptr : &it->second;
}

const BlockParams& SupernetWeights::at(VariantKey key) const {
  const BlockParams* p = find(key);
  if (!p) throw Error("missing block weights for " + key.str());
  return *p;
}

DenseArray head_forward(const SupernetWeights& w, const DenseArray& x) {
  return linear_forward(w.head, x, true);
}

DenseArray tail_forward(const SupernetWeights& w, const DenseArray& features) {
  return linear_forward(w.tail, features, false);
}

DenseArray forward_segment(const SupernetWeights& w, const SubnetEncoding& enc, size_t first,
                           size_t last, DenseArray feature) {
  for (size_t k = first; k < last; ++k) feature = units_forward(w.at(enc[k]), feature);
  return feature;
}

SubnetOutput subnet_forward(const SupernetWeights& w, const SubnetEncoding& enc,
                            const DenseArray& x, bool capture_features) {
  for (const VariantKey& key : enc.choices()) w.at(key);
  SubnetOutput out;
  DenseArray f = head_forward(w, x);
  for (const VariantKey& key : enc.choices()) {
    f = units_forward(w.at(key), f);
    if (capture_features) out.features.push_back(f);
  }
  out.logits = tail_forward(w, f);
  return out;
}

}  // namespace edgeadapt
