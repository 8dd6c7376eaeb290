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

#include "edgeadapt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace edgeadapt {

Dataset Dataset::slice(size_t begin, size_t end) const {
  Dataset out;
  out.dim = dim;
  out.classes = classes;
  out.x = x.slice_rows(begin, end);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Dataset Dataset::gather(const std::vector<size_t>& rows) const {
  Dataset out;
  out.dim = dim;
  out.classes = classes;
  std::vector<double> data;
  data.reserve(rows.size() * dim);
  for (size_t r : rows) {
    auto row = x.row(r);
    data.insert(data.end(), row.begin(), row.end());
    out.labels.push_back(labels[r]);
  }
  out.x = DenseArray({rows.size(), dim}, std::move(data));
  return out;
}

std::vector<size_t> Dataset::class_counts() const {
  std::vector<size_t> counts(classes, 0);
  for (int l : labels) ++counts[static_cast<size_t>(l)];
  return counts;
}

Dataset make_blobs(size_t classes, size_t dim, size_t per_class, double separation,
                   uint64_t seed, size_t clusters_per_class) {
  if (classes == 0 || dim == 0) throw Error("make_blobs: classes and dim must be positive");
  if (clusters_per_class == 0) throw Error("make_blobs: clusters_per_class must be positive");
  Rng center_rng = Rng::stream(seed, "centers");
  Rng point_rng = Rng::stream(seed, "points");
  const size_t clusters = classes * clusters_per_class;
  // Cluster k belongs to class k % classes.
  std::vector<std::vector<double>> centers(clusters, std::vector<double>(dim, 0.0));
  const double radius = separation / std::sqrt(2.0);
  if (clusters <= dim) {
    for (size_t c = 0; c < clusters; ++c) centers[c][c] = radius;
  } else {
    for (auto& c : centers) {
      double norm = 0.0;
      for (double& v : c) {
        v = center_rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (double& v : c) v *= radius / norm;
    }
  }
  Dataset out;
  out.dim = dim;
  out.classes = classes;
  std::vector<double> data;
  data.reserve(classes * per_class * dim);
  for (size_t i = 0; i < per_class; ++i) {
    for (size_t c = 0; c < classes; ++c) {
      const auto& center = centers[c + classes * (i % clusters_per_class)];
      for (size_t d = 0; d < dim; ++d) data.push_back(center[d] + point_rng.normal());
      out.labels.push_back(static_cast<int>(c));
    }
  }
  out.x = DenseArray({classes * per_class, dim}, std::move(data));
  return out;
}

std::vector<Dataset> make_batches(const Dataset& data, size_t batch_size) {
  if (batch_size == 0) throw Error("batch size must be positive");
  std::vector<Dataset> out;
  for (size_t b = 0; b < data.size(); b += batch_size) {
    out.push_back(data.slice(b, std::min(data.size(), b + batch_size)));
  }
  return out;
}

std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with our own index draws keeps the order platform-stable.
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double second_fraction,
                                          uint64_t seed) {
  Rng rng = Rng::stream(seed, "split");
  auto idx = shuffled_indices(data.size(), rng);
  const size_t second = static_cast<size_t>(std::llround(second_fraction * data.size()));
  std::vector<size_t> a(idx.begin() + static_cast<std::ptrdiff_t>(second), idx.end());
  std::vector<size_t> b(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(second));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {data.gather(a), data.gather(b)};
}

}  // namespace edgeadapt
