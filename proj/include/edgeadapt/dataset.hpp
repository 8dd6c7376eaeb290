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

#ifndef EDGEADAPT_DATASET_HPP_
#define EDGEADAPT_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "edgeadapt/engine.hpp"

namespace edgeadapt {

/// Labelled examples: x is [n, dim], labels in [0, classes).
struct Dataset {
  size_t dim = 0;
  size_t classes = 0;
  DenseArray x;
  std::vector<int> labels;

  size_t size() const { return labels.size(); }
  /// Rows [begin, end) as a batch.
  Dataset slice(size_t begin, size_t end) const;
  /// Rows in the given order.
  Dataset gather(const std::vector<size_t>& rows) const;
  std::vector<size_t> class_counts() const;
};

/// Isotropic unit-variance Gaussian blobs, `clusters_per_class` per class.
/// When all clusters fit in `dim` their centres sit on orthogonal axes, so
/// every pair is `separation` standard deviations apart; otherwise centres
/// are random directions at the same radius.
Dataset make_blobs(size_t classes, size_t dim, size_t per_class, double separation,
                   uint64_t seed, size_t clusters_per_class = 1);

/// Consecutive batches of at most batch_size rows.
std::vector<Dataset> make_batches(const Dataset& data, size_t batch_size);

/// Seeded random split; second_fraction of the rows go to the second part.
/// Both parts keep the original row order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double second_fraction,
                                          uint64_t seed);

std::vector<size_t> shuffled_indices(size_t n, Rng& rng);

}  // namespace edgeadapt

#endif  // EDGEADAPT_DATASET_HPP_
