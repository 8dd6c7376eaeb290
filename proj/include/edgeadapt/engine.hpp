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

#ifndef EDGEADAPT_ENGINE_HPP_
#define EDGEADAPT_ENGINE_HPP_

// Minimal dense-network engine: affine/bottleneck forward and backward, the
// two losses used by supernet training, and plain SGD. All arithmetic is in
// double precision with a fixed reduction order, so identical inputs give
// bitwise identical outputs.

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "edgeadapt/common.hpp"
#include "edgeadapt/graph.hpp"
#include "edgeadapt/rng.hpp"

namespace edgeadapt {

/// Row-major array of doubles. Batches are rank 2: [rows, features].
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<size_t> shape, double fill = 0.0);
  explicit DenseArray(std::vector<size_t> shape, std::vector<double> data);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t size() const { return data_.size(); }
  /// Leading dimension for rank >= 2, 1 for vectors.
  size_t rows() const;
  /// Product of all trailing dimensions after rows().
  size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& at(size_t r, size_t c) { return data_[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols() + c]; }
  std::span<const double> row(size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  /// Copy of rows [begin, end).
  DenseArray slice_rows(size_t begin, size_t end) const;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

/// y = x W + b with W stored [in_dim, out_dim].
struct LinearParams {
  size_t in_dim = 0;
  size_t out_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static LinearParams zeros(size_t in_dim, size_t out_dim);
  std::array<std::vector<double>*, 2> tensors() { return {&weight, &bias}; }
  std::array<const std::vector<double>*, 2> tensors() const { return {&weight, &bias}; }
  friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

/// One bottleneck unit: y = rect(rect(x W1 + b1) W2 + b2). The outer
/// rectifier is skipped when linear_out is set.
struct BottleneckParams {
  size_t in_dim = 0;
  size_t width = 0;
  size_t out_dim = 0;
  std::vector<double> w1;  // [in_dim, width]
  std::vector<double> b1;  // [width]
  std::vector<double> w2;  // [width, out_dim]
  std::vector<double> b2;  // [out_dim]
  bool linear_out = false;

  static BottleneckParams zeros(const UnitShape& shape);
  UnitShape shape() const { return {in_dim, width, out_dim}; }
  size_t param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  std::array<std::vector<double>*, 4> tensors() { return {&w1, &b1, &w2, &b2}; }
  std::array<const std::vector<double>*, 4> tensors() const { return {&w1, &b1, &w2, &b2}; }
  friend bool operator==(const BottleneckParams&, const BottleneckParams&) = default;
};

/// Weights of one block variant: its bottleneck units, applied in order.
using BlockParams = std::vector<BottleneckParams>;

struct BlockGradients {
  BottleneckParams params;  // same shapes as the forward params
  DenseArray input_grad;
};

struct UnitsGradients {
  BlockParams params;
  DenseArray input_grad;
};

struct LinearGradients {
  LinearParams params;
  DenseArray input_grad;
};

DenseArray linear_forward(const LinearParams& p, const DenseArray& x, bool rectify);
/// Gradients of y = x W + b given dL/dy (apply any rectifier mask beforehand).
LinearGradients linear_backward(const LinearParams& p, const DenseArray& x,
                                const DenseArray& upstream);

DenseArray block_forward(const BottleneckParams& p, const DenseArray& x);
BlockGradients block_backward(const BottleneckParams& p, const DenseArray& x,
                              const DenseArray& upstream);

DenseArray units_forward(std::span<const BottleneckParams> units, const DenseArray& x);
UnitsGradients units_backward(std::span<const BottleneckParams> units, const DenseArray& x,
                              const DenseArray& upstream);

struct LossResult {
  double loss = 0.0;
  std::vector<DenseArray> grads;  // one per student / logits array
};

/// (1/M) * sum_i ||T_i - S_i||^2 over M teacher/student pairs; gradients are
/// taken with respect to the student arrays.
LossResult distillation_loss(std::span<const DenseArray> teacher,
                             std::span<const DenseArray> student);

/// Mean negative log-softmax of the true class, with max-subtraction.
LossResult cross_entropy_loss(const DenseArray& logits, std::span<const int> labels);

/// p <- p - lr * g on every tensor.
void sgd_step(BottleneckParams& p, const BottleneckParams& grad, double lr);
void sgd_step(LinearParams& p, const LinearParams& grad, double lr);

std::vector<int> argmax_rows(const DenseArray& logits);
size_t count_correct(const DenseArray& logits, std::span<const int> labels);

/// Uniform(-scale, scale) initialization.
BottleneckParams random_bottleneck(const UnitShape& shape, double scale, Rng& rng);
/// He-uniform initialization for training from scratch.
BottleneckParams he_bottleneck(const UnitShape& shape, Rng& rng);
LinearParams he_linear(size_t in_dim, size_t out_dim, Rng& rng);

/// The pretrained chain model: rectified input projection, a chain of
/// bottleneck layers, linear classifier tail.
struct ToyClassifier {
  LinearParams head;
  std::vector<BottleneckParams> layers;
  LinearParams tail;
  std::vector<int> fusion_tags;  // per layer
  std::vector<int> stages;       // per layer

  std::vector<ChainLayer> chain_layers() const;
  size_t input_dim() const { return head.in_dim; }
  size_t num_classes() const { return tail.out_dim; }
};

DenseArray classifier_forward(const ToyClassifier& model, const DenseArray& x);

/// Weights of a supernet (or of the resident subset of one). Original
/// blocks (degree 0) and head/tail are frozen copies of the pretrained model.
struct SupernetWeights {
  LinearParams head;
  LinearParams tail;
  std::map<VariantKey, BlockParams> blocks;

  const BlockParams* find(VariantKey key) const;
  const BlockParams& at(VariantKey key) const;
};

struct SubnetOutput {
  DenseArray logits;
  // Output of each chosen block when captured, in choice order.
  std::vector<DenseArray> features;
};

DenseArray head_forward(const SupernetWeights& w, const DenseArray& x);
DenseArray tail_forward(const SupernetWeights& w, const DenseArray& features);

/// Composes head, the chosen variants in order, and tail. Throws Error if a
/// chosen block's weights are not present.
SubnetOutput subnet_forward(const SupernetWeights& w, const SubnetEncoding& enc,
                            const DenseArray& x, bool capture_features = false);

/// Runs choices [first, last) of `enc` on an intermediate feature.
DenseArray forward_segment(const SupernetWeights& w, const SubnetEncoding& enc,
                           size_t first, size_t last, DenseArray feature);

}  // namespace edgeadapt

#endif  // EDGEADAPT_ENGINE_HPP_
