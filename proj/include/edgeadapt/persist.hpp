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

#ifndef EDGEADAPT_PERSIST_HPP_
#define EDGEADAPT_PERSIST_HPP_

// On-disk formats. Structure lives in human-readable text (JSON descriptors,
// CSV tables with comment headers); weights live in a little-endian binary
// blob:
//
//   "EAWB" | version u8 (=1) | kind u8 (1 chain model, 2 supernet) | f64...
//
// Values follow the descriptor order: head W, head b; every block's units
// (w1, b1, w2, b2) in key order; tail W, tail b. Every text table written
// here also gets a JSON-lines mirror next to it (same stem, .jsonl).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgeadapt/dataset.hpp"
#include "edgeadapt/elastic.hpp"
#include "edgeadapt/engine.hpp"
#include "edgeadapt/graph.hpp"
#include "edgeadapt/latsim.hpp"
#include "edgeadapt/runtime.hpp"
#include "edgeadapt/search.hpp"

namespace edgeadapt {

namespace fs = std::filesystem;

/// Shortest text that parses back to the same double ("inf" for infinity).
std::string format_number(double v);
/// Strict parse of a whole field; `where` prefixes the error.
double parse_number(std::string_view text, const std::string& where);

inline constexpr uint8_t kBlobVersion = 1;
inline constexpr uint8_t kBlobKindModel = 1;
inline constexpr uint8_t kBlobKindSupernet = 2;

/// Writes `path` only through a temporary sibling and a rename.
void write_file_atomic(const fs::path& path, std::string_view contents);
std::string read_file(const fs::path& path);
std::string sha256_hex(std::string_view bytes);

// Pretrained chain model: <dir>/model.json + <dir>/weights.bin
void save_model(const fs::path& dir, const ToyClassifier& model,
                const nlohmann::json& metadata = nlohmann::json::object());
ToyClassifier load_model(const fs::path& dir);

struct SupernetBundle {
  SupernetGraph graph;
  SupernetWeights weights;
  nlohmann::json metadata = nlohmann::json::object();
};

// Supernet: <dir>/supernet.json + <dir>/weights.bin
void save_bundle(const fs::path& dir, const SupernetBundle& bundle);
SupernetBundle load_bundle(const fs::path& dir);
/// Descriptor only; weights stay on disk.
SupernetGraph load_bundle_graph(const fs::path& dir, nlohmann::json* metadata = nullptr);

nlohmann::json graph_to_json(const SupernetGraph& graph);
SupernetGraph graph_from_json(const nlohmann::json& doc, const std::string& where);

/// Pages blocks from a bundle's weights.bin on demand.
class BlobWeightStore : public WeightStore {
 public:
  explicit BlobWeightStore(const fs::path& bundle_dir);

  bool contains(VariantKey key) const override;
  BlockParams load(VariantKey key) const override;
  LinearParams head() const override { return head_; }
  LinearParams tail() const override { return tail_; }
  const SupernetGraph& graph() const { return graph_; }

 private:
  fs::path blob_;
  SupernetGraph graph_;
  LinearParams head_;
  LinearParams tail_;
  std::map<VariantKey, uint64_t> offsets_;  // byte offset of each block
};

// Datasets: CSV with "# key=value" comment lines, then label,x0,x1,...
void save_dataset(const fs::path& path, const Dataset& data,
                  const std::map<std::string, std::string>& header = {});
Dataset load_dataset(const fs::path& path, std::map<std::string, std::string>* header = nullptr);

// Latency tables: "<start>:<degree> <ms>" lines after a small header.
void save_table(const fs::path& path, const LatencyTable& table);
LatencyTable load_table(const fs::path& path);

void save_pool(const fs::path& path, const SubnetPool& pool);
SubnetPool load_pool(const fs::path& path);

void save_history(const fs::path& path, const std::vector<HistoryRow>& history);
std::vector<HistoryRow> load_history(const fs::path& path);

void save_events(const fs::path& path, const std::vector<ServeEvent>& events);

void save_training_report(const fs::path& path, const TrainingReport& report);

}  // namespace edgeadapt

#endif  // EDGEADAPT_PERSIST_HPP_
