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

#include "edgeadapt/persist.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>
#include <utility>

#include <openssl/evp.h>

namespace edgeadapt {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'A', 'W', 'B'};
constexpr size_t kBlobHeader = 6;

// ---- binary blob ---------------------------------------------------------

class BlobWriter {
 public:
  explicit BlobWriter(uint8_t kind) {
    bytes_.append(kMagic, 4);
    bytes_.push_back(static_cast<char>(kBlobVersion));
    bytes_.push_back(static_cast<char>(kind));
  }
  void put(const std::vector<double>& values) {
    for (double v : values) {
      const uint64_t bits = std::bit_cast<uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  void put(const LinearParams& p) {
    put(p.weight);
    put(p.bias);
  }
  void put(const BottleneckParams& p) {
    for (const auto* t : p.tensors()) put(*t);
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class BlobReader {
 public:
  BlobReader(std::string bytes, std::string path, uint8_t kind)
      : bytes_(std::move(bytes)), path_(std::move(path)) {
    if (bytes_.size() < kBlobHeader || bytes_.compare(0, 4, kMagic, 4) != 0) {
      throw ParseError(path_ + "@0", "not a weight blob (bad magic)");
    }
    if (static_cast<uint8_t>(bytes_[4]) != kBlobVersion) {
      throw ParseError(path_ + "@4", "unsupported blob version " +
                                         std::to_string(static_cast<uint8_t>(bytes_[4])));
    }
    if (static_cast<uint8_t>(bytes_[5]) != kind) {
      throw ParseError(path_ + "@5", "blob kind " + std::to_string(static_cast<uint8_t>(bytes_[5])) +
                                         ", expected " + std::to_string(kind));
    }
    pos_ = kBlobHeader;
  }
  void get(std::vector<double>& out, size_t n) {
    if (bytes_.size() - pos_ < 8 * n) {
      throw ParseError(path_ + "@" + std::to_string(pos_), "weight blob is truncated");
    }
    out.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + 8 * i + b])) << (8 * b);
      }
      out[i] = std::bit_cast<double>(bits);
    }
    pos_ += 8 * n;
  }
  LinearParams linear(size_t in, size_t out) {
    LinearParams p = LinearParams::zeros(in, out);
    get(p.weight, in * out);
    get(p.bias, out);
    return p;
  }
  BottleneckParams unit(const UnitShape& s) {
    BottleneckParams p = BottleneckParams::zeros(s);
    get(p.w1, s.in_dim * s.width);
    get(p.b1, s.width);
    get(p.w2, s.width * s.out_dim);
    get(p.b2, s.out_dim);
    return p;
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw ParseError(path_ + "@" + std::to_string(pos_), "trailing bytes after the last tensor");
    }
  }

 private:
  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

double read_f64_at(std::ifstream& in, const std::string& path, uint64_t offset) {
  unsigned char buf[8];
  in.seekg(static_cast<std::streamoff>(offset));
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw ParseError(path + "@" + std::to_string(offset), "weight blob is truncated");
  }
  uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(buf[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

uint64_t unit_values(const UnitShape& s) { return s.param_size(); }

uint64_t linear_values(size_t in, size_t out) { return in * out + out; }

// ---- text tables ---------------------------------------------------------

using Header = std::vector<std::pair<std::string, std::string>>;

std::string csv_field(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  }
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_null()) return "";
  return v.dump();
}

json mirror_number(double v) {
  // JSON has no infinity; the mirror spells it as a string.
  if (std::isfinite(v)) return v;
  return format_number(v);
}

fs::path mirror_path(const fs::path& path) {
  fs::path p = path;
  return p.replace_extension(".jsonl");
}

void write_table_files(const fs::path& path, const std::string& title, const Header& header,
                       const std::vector<std::string>& columns,
                       const std::vector<std::vector<json>>& rows) {
  std::string csv = "# " + title + "\n";
  json head = json::object();
  for (const auto& [k, v] : header) {
    csv += "# " + k + "=" + v + "\n";
    head[k] = v;
  }
  for (size_t i = 0; i < columns.size(); ++i) csv += (i ? "," : "") + columns[i];
  csv += "\n";
  std::string lines = json{{"format", title}, {"header", head}}.dump() + "\n";
  for (const auto& row : rows) {
    json obj = json::object();
    for (size_t i = 0; i < row.size(); ++i) {
      csv += (i ? "," : "") + csv_field(row[i]);
      obj[columns[i]] = row[i].is_number_float() ? mirror_number(row[i].get<double>()) : row[i];
    }
    csv += "\n";
    lines += obj.dump() + "\n";
  }
  write_file_atomic(path, csv);
  write_file_atomic(mirror_path(path), lines);
}

std::vector<std::string> split_csv(std::string_view line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError(where, "unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

struct ParsedTable {
  std::map<std::string, std::string> header;
  std::vector<std::pair<size_t, std::vector<std::string>>> rows;  // line number, fields
};

ParsedTable read_table(const fs::path& path, const std::string& title,
                       const std::vector<std::string>& columns) {
  std::istringstream in(read_file(path));
  const std::string name = path.string();
  ParsedTable t;
  std::string line;
  size_t no = 0;
  bool titled = false, columned = false;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = name + ":" + std::to_string(no);
    if (!titled) {
      if (line != "# " + title) throw ParseError(where, "expected '# " + title + "'");
      titled = true;
      continue;
    }
    if (line.rfind("#", 0) == 0) {
      const auto eq = line.find('=');
      if (eq != std::string::npos && line.size() > 2) {
        t.header[line.substr(2, eq - 2)] = line.substr(eq + 1);
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv(line, where);
    if (!columned) {
      if (fields != columns) throw ParseError(where, "unexpected column header");
      columned = true;
      continue;
    }
    if (fields.size() != columns.size()) {
      throw ParseError(where, "expected " + std::to_string(columns.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    }
    t.rows.emplace_back(no, std::move(fields));
  }
  if (!titled) throw ParseError(name + ":1", "empty file");
  if (!columned) throw ParseError(name + ":" + std::to_string(no), "missing column header");
  return t;
}

const std::string& header_value(const ParsedTable& t, const std::string& key,
                                const fs::path& path) {
  auto it = t.header.find(key);
  if (it == t.header.end()) throw ParseError(path.string() + ":1", "missing header '" + key + "'");
  return it->second;
}

long long parse_int(std::string_view text, const std::string& where) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(where, "expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

SubnetEncoding parse_arch(const std::string& text, const std::string& where) {
  try {
    return SubnetEncoding::parse(text);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(where, e.what());
  }
}

// ---- descriptors ---------------------------------------------------------

json units_to_json(const std::vector<UnitShape>& units) {
  json out = json::array();
  for (const auto& u : units) out.push_back({u.in_dim, u.width, u.out_dim});
  return out;
}

std::vector<UnitShape> units_from_json(const json& j) {
  std::vector<UnitShape> out;
  for (const auto& u : j) {
    if (!u.is_array() || u.size() != 3) throw Error("unit shape must be [in, width, out]");
    out.push_back({u[0].get<size_t>(), u[1].get<size_t>(), u[2].get<size_t>()});
  }
  return out;
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + "@" + std::to_string(e.byte), "malformed JSON");
  }
}

void check_format(const json& doc, const std::string& format, const std::string& where) {
  if (!doc.is_object() || doc.value("format", "") != format) {
    throw ParseError(where, "expected a '" + format + "' document");
  }
  if (doc.value("version", 0) != 1) throw ParseError(where, "unsupported descriptor version");
}

std::string blob_bytes_checked(const fs::path& dir, const json& doc) {
  const fs::path blob = dir / "weights.bin";
  std::string bytes = read_file(blob);
  const std::string want = doc.at("weights").at("sha256").get<std::string>();
  if (sha256_hex(bytes) != want) {
    throw ParseError(blob.string() + "@0", "weights do not match the descriptor's sha256");
  }
  return bytes;
}

json weights_record(const std::string& bytes) {
  return {{"file", "weights.bin"}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}};
}

void check_unit(const BottleneckParams& p, const UnitShape& s, const std::string& what) {
  if (p.shape() != s || p.w1.size() != s.in_dim * s.width || p.b1.size() != s.width ||
      p.w2.size() != s.width * s.out_dim || p.b2.size() != s.out_dim) {
    throw Error(what + ": weights do not match the declared unit shape");
  }
}

void check_linear(const LinearParams& p, size_t in, size_t out, const std::string& what) {
  if (p.in_dim != in || p.out_dim != out || p.weight.size() != in * out || p.bias.size() != out) {
    throw Error(what + ": weights do not match the declared shape");
  }
}

template <typename F>
auto wrap_json_errors(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(where, e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(where, e.what());
  }
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_number(std::string_view text, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(where, "expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

// ---- chain model ---------------------------------------------------------

void save_model(const fs::path& dir, const ToyClassifier& model, const json& metadata) {
  if (model.layers.empty()) throw Error("model has no layers");
  BlobWriter blob(kBlobKindModel);
  blob.put(model.head);
  json layers = json::array();
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    check_unit(l, l.shape(), "layer " + std::to_string(i));
    blob.put(l);
    layers.push_back({{"in_dim", l.in_dim},
                      {"width", l.width},
                      {"out_dim", l.out_dim},
                      {"fusion_tag", model.fusion_tags.at(i)},
                      {"stage", model.stages.at(i)}});
  }
  blob.put(model.tail);
  check_linear(model.head, model.head.in_dim, model.layers.front().in_dim, "head");
  check_linear(model.tail, model.layers.back().out_dim, model.tail.out_dim, "tail");
  json doc = {{"format", "edgeadapt-model"},
              {"version", 1},
              {"input_dim", model.input_dim()},
              {"num_classes", model.num_classes()},
              {"layers", layers},
              {"weights", weights_record(blob.bytes())},
              {"metadata", metadata}};
  write_file_atomic(dir / "weights.bin", blob.bytes());
  write_file_atomic(dir / "model.json", doc.dump(2) + "\n");
}

ToyClassifier load_model(const fs::path& dir) {
  const fs::path desc = dir / "model.json";
  const json doc = read_json(desc);
  return wrap_json_errors(desc.string(), [&] {
    check_format(doc, "edgeadapt-model", desc.string());
    BlobReader blob(blob_bytes_checked(dir, doc), (dir / "weights.bin").string(), kBlobKindModel);
    ToyClassifier m;
    const auto& layers = doc.at("layers");
    if (!layers.is_array() || layers.empty()) throw Error("model needs at least one layer");
    const size_t input_dim = doc.at("input_dim").get<size_t>();
    const size_t classes = doc.at("num_classes").get<size_t>();
    m.head = blob.linear(input_dim, layers.front().at("in_dim").get<size_t>());
    for (const auto& l : layers) {
      m.layers.push_back(blob.unit({l.at("in_dim").get<size_t>(), l.at("width").get<size_t>(),
                                    l.at("out_dim").get<size_t>()}));
      m.fusion_tags.push_back(l.at("fusion_tag").get<int>());
      m.stages.push_back(l.at("stage").get<int>());
    }
    m.tail = blob.linear(layers.back().at("out_dim").get<size_t>(), classes);
    blob.expect_end();
    return m;
  });
}

// ---- supernet bundle -----------------------------------------------------

json graph_to_json(const SupernetGraph& graph) {
  json positions = json::array();
  for (const auto& p : graph.positions()) {
    positions.push_back({{"index", p.index},
                         {"in_dim", p.in_dim},
                         {"out_dim", p.out_dim},
                         {"param_size", p.param_size},
                         {"stage", p.stage},
                         {"first_layer", p.first_layer},
                         {"layer_count", p.layer_count},
                         {"units", units_to_json(p.units)}});
  }
  json variants = json::array();
  for (const auto& [key, v] : graph.variants()) {
    variants.push_back({{"start", key.start},
                        {"degree", key.degree},
                        {"in_dim", v.in_dim},
                        {"out_dim", v.out_dim},
                        {"param_size", v.param_size},
                        {"width", v.width},
                        {"shrink_rate", v.shrink_rate},
                        {"units", units_to_json(v.units)}});
  }
  return {{"gamma", graph.gamma()},
          {"original_params", graph.original_params()},
          {"input_dim", graph.input_dim},
          {"num_classes", graph.num_classes},
          {"positions", positions},
          {"variants", variants}};
}

SupernetGraph graph_from_json(const json& doc, const std::string& where) {
  return wrap_json_errors(where, [&] {
    std::vector<BlockPosition> positions;
    for (const auto& p : doc.at("positions")) {
      BlockPosition b;
      b.index = p.at("index").get<int>();
      b.in_dim = p.at("in_dim").get<size_t>();
      b.out_dim = p.at("out_dim").get<size_t>();
      b.param_size = p.at("param_size").get<uint64_t>();
      b.stage = p.at("stage").get<int>();
      b.first_layer = p.at("first_layer").get<size_t>();
      b.layer_count = p.at("layer_count").get<size_t>();
      b.units = units_from_json(p.at("units"));
      positions.push_back(std::move(b));
    }
    SupernetGraph g(std::move(positions), doc.at("gamma").get<double>(),
                    doc.at("original_params").get<uint64_t>());
    g.input_dim = doc.at("input_dim").get<size_t>();
    g.num_classes = doc.at("num_classes").get<size_t>();
    for (const auto& v : doc.at("variants")) {
      BlockVariant b;
      b.key = {v.at("start").get<int>(), v.at("degree").get<int>()};
      b.in_dim = v.at("in_dim").get<size_t>();
      b.out_dim = v.at("out_dim").get<size_t>();
      b.param_size = v.at("param_size").get<uint64_t>();
      b.width = v.at("width").get<size_t>();
      b.shrink_rate = v.at("shrink_rate").get<double>();
      b.units = units_from_json(v.at("units"));
      g.add_variant(std::move(b));
    }
    for (int p = 0; p < g.size(); ++p) {
      if (!g.find({p, 0})) throw Error("position " + std::to_string(p) + " has no original block");
    }
    if (g.size() == 0) throw Error("supernet has no positions");
    return g;
  });
}

void save_bundle(const fs::path& dir, const SupernetBundle& bundle) {
  const SupernetGraph& g = bundle.graph;
  if (g.size() == 0) throw Error("cannot save an empty supernet");
  const size_t first_in = g.positions().front().in_dim;
  const size_t last_out = g.positions().back().out_dim;
  check_linear(bundle.weights.head, g.input_dim, first_in, "head");
  check_linear(bundle.weights.tail, last_out, g.num_classes, "tail");
  BlobWriter blob(kBlobKindSupernet);
  blob.put(bundle.weights.head);
  if (bundle.weights.blocks.size() != g.variants().size()) {
    throw Error("supernet weights do not cover exactly the graph's variants");
  }
  for (const auto& [key, v] : g.variants()) {
    const BlockParams& units = bundle.weights.at(key);
    if (units.size() != v.units.size()) throw Error("block " + key.str() + ": unit count mismatch");
    for (size_t u = 0; u < units.size(); ++u) {
      check_unit(units[u], v.units[u], "block " + key.str());
      blob.put(units[u]);
    }
  }
  blob.put(bundle.weights.tail);
  json doc = {{"format", "edgeadapt-supernet"}, {"version", 1}};
  doc.update(graph_to_json(g));
  doc["weights"] = weights_record(blob.bytes());
  doc["metadata"] = bundle.metadata;
  write_file_atomic(dir / "weights.bin", blob.bytes());
  write_file_atomic(dir / "supernet.json", doc.dump(2) + "\n");
}

SupernetGraph load_bundle_graph(const fs::path& dir, json* metadata) {
  const fs::path desc = dir / "supernet.json";
  const json doc = read_json(desc);
  check_format(doc, "edgeadapt-supernet", desc.string());
  if (metadata) *metadata = doc.value("metadata", json::object());
  return graph_from_json(doc, desc.string());
}

SupernetBundle load_bundle(const fs::path& dir) {
  const fs::path desc = dir / "supernet.json";
  const json doc = read_json(desc);
  check_format(doc, "edgeadapt-supernet", desc.string());
  SupernetBundle b;
  b.graph = graph_from_json(doc, desc.string());
  b.metadata = doc.value("metadata", json::object());
  const std::string bytes = wrap_json_errors(desc.string(), [&] { return blob_bytes_checked(dir, doc); });
  BlobReader blob(bytes, (dir / "weights.bin").string(), kBlobKindSupernet);
  const auto& g = b.graph;
  b.weights.head = blob.linear(g.input_dim, g.positions().front().in_dim);
  for (const auto& [key, v] : g.variants()) {
    BlockParams units;
    for (const auto& s : v.units) units.push_back(blob.unit(s));
    b.weights.blocks.emplace(key, std::move(units));
  }
  b.weights.tail = blob.linear(g.positions().back().out_dim, g.num_classes);
  blob.expect_end();
  return b;
}

BlobWeightStore::BlobWeightStore(const fs::path& bundle_dir)
    : blob_(bundle_dir / "weights.bin"), graph_(load_bundle_graph(bundle_dir)) {
  const size_t first_in = graph_.positions().front().in_dim;
  const size_t last_out = graph_.positions().back().out_dim;
  uint64_t offset = kBlobHeader + 8 * linear_values(graph_.input_dim, first_in);
  for (const auto& [key, v] : graph_.variants()) {
    offsets_[key] = offset;
    for (const auto& s : v.units) offset += 8 * unit_values(s);
  }
  const uint64_t tail_at = offset;
  const uint64_t expected = offset + 8 * linear_values(last_out, graph_.num_classes);
  std::error_code ec;
  const uint64_t actual = fs::file_size(blob_, ec);
  if (ec) throw Error("cannot open " + blob_.string());
  if (actual != expected) {
    throw ParseError(blob_.string() + "@" + std::to_string(std::min(actual, expected)),
                     "weight blob size " + std::to_string(actual) + " does not match the descriptor (" +
                         std::to_string(expected) + ")");
  }
  std::string header(kBlobHeader, '\0');
  {
    std::ifstream in(blob_, std::ios::binary);
    in.read(header.data(), kBlobHeader);
  }
  BlobReader check(header, blob_.string(), kBlobKindSupernet);
  std::ifstream in(blob_, std::ios::binary);
  auto read_linear = [&](uint64_t at, size_t in_dim, size_t out_dim) {
    LinearParams p = LinearParams::zeros(in_dim, out_dim);
    for (auto* t : p.tensors()) {
      for (double& v : *t) {
        v = read_f64_at(in, blob_.string(), at);
        at += 8;
      }
    }
    return p;
  };
  head_ = read_linear(kBlobHeader, graph_.input_dim, first_in);
  tail_ = read_linear(tail_at, last_out, graph_.num_classes);
}

bool BlobWeightStore::contains(VariantKey key) const { return offsets_.count(key) > 0; }

BlockParams BlobWeightStore::load(VariantKey key) const {
  auto it = offsets_.find(key);
  if (it == offsets_.end()) throw Error("weight blob has no block " + key.str());
  std::ifstream in(blob_, std::ios::binary);
  if (!in) throw Error("cannot open " + blob_.string());
  uint64_t at = it->second;
  BlockParams units;
  for (const UnitShape& s : graph_.at(key).units) {
    BottleneckParams p = BottleneckParams::zeros(s);
    for (auto* t : p.tensors()) {
      for (double& v : *t) {
        v = read_f64_at(in, blob_.string(), at);
        at += 8;
      }
    }
    units.push_back(std::move(p));
  }
  return units;
}

// ---- datasets ------------------------------------------------------------

void save_dataset(const fs::path& path, const Dataset& data,
                  const std::map<std::string, std::string>& header) {
  Header h = {{"dim", std::to_string(data.dim)}, {"classes", std::to_string(data.classes)}};
  for (const auto& [k, v] : header) {
    if (k != "dim" && k != "classes") h.emplace_back(k, v);
  }
  std::vector<std::string> columns = {"label"};
  for (size_t d = 0; d < data.dim; ++d) columns.push_back("x" + std::to_string(d));
  std::vector<std::vector<json>> rows;
  rows.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    std::vector<json> row = {data.labels[i]};
    for (double v : data.x.row(i)) row.push_back(v);
    rows.push_back(std::move(row));
  }
  write_table_files(path, "edgeadapt dataset v1", h, columns, rows);
}

Dataset load_dataset(const fs::path& path, std::map<std::string, std::string>* header) {
  // Column names depend on dim, so read the header first.
  std::istringstream probe(read_file(path));
  std::string line;
  size_t dim = 0, classes = 0;
  size_t no = 0;
  while (std::getline(probe, line) && line.rfind("#", 0) == 0) {
    ++no;
    const std::string where = path.string() + ":" + std::to_string(no);
    if (line.rfind("# dim=", 0) == 0) dim = static_cast<size_t>(parse_int(line.substr(6), where));
    if (line.rfind("# classes=", 0) == 0) classes = static_cast<size_t>(parse_int(line.substr(10), where));
  }
  if (dim == 0 || classes == 0) throw ParseError(path.string() + ":1", "missing dim/classes header");
  std::vector<std::string> columns = {"label"};
  for (size_t d = 0; d < dim; ++d) columns.push_back("x" + std::to_string(d));
  const ParsedTable t = read_table(path, "edgeadapt dataset v1", columns);
  if (header) *header = t.header;
  Dataset out;
  out.dim = dim;
  out.classes = classes;
  std::vector<double> x;
  x.reserve(t.rows.size() * dim);
  for (const auto& [ln, fields] : t.rows) {
    const std::string where = path.string() + ":" + std::to_string(ln);
    const long long label = parse_int(fields[0], where);
    if (label < 0 || static_cast<size_t>(label) >= classes) {
      throw ParseError(where, "label " + fields[0] + " outside [0, " + std::to_string(classes) + ")");
    }
    out.labels.push_back(static_cast<int>(label));
    for (size_t d = 0; d < dim; ++d) x.push_back(parse_number(fields[d + 1], where));
  }
  out.x = DenseArray({out.labels.size(), dim}, std::move(x));
  return out;
}

// ---- latency tables ------------------------------------------------------

void save_table(const fs::path& path, const LatencyTable& table) {
  std::string text = "# edgeadapt latency table v1\n";
  text += "device_id " + table.device_id + "\n";
  text += "profiled_at_ms " + format_number(table.profiled_at_ms) + "\n";
  std::string lines =
      json{{"format", "edgeadapt latency table v1"},
           {"device_id", table.device_id},
           {"profiled_at_ms", table.profiled_at_ms}}.dump() + "\n";
  for (const auto& [key, ms] : table.entries) {
    text += key.str() + " " + format_number(ms) + "\n";
    lines += json{{"variant", key.str()}, {"ms", ms}}.dump() + "\n";
  }
  write_file_atomic(path, text);
  write_file_atomic(mirror_path(path), lines);
}

LatencyTable load_table(const fs::path& path) {
  std::istringstream in(read_file(path));
  LatencyTable t;
  std::string line;
  size_t no = 0;
  bool titled = false;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = path.string() + ":" + std::to_string(no);
    if (!titled) {
      if (line != "# edgeadapt latency table v1") throw ParseError(where, "not a latency table");
      titled = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError(where, "expected '<key> <value>'");
    const std::string key = line.substr(0, sp);
    const std::string value = line.substr(sp + 1);
    if (key == "device_id") {
      t.device_id = value;
    } else if (key == "profiled_at_ms") {
      t.profiled_at_ms = parse_number(value, where);
    } else {
      const auto colon = key.find(':');
      if (colon == std::string::npos) throw ParseError(where, "unknown entry '" + key + "'");
      VariantKey k{static_cast<int>(parse_int(key.substr(0, colon), where)),
                   static_cast<int>(parse_int(key.substr(colon + 1), where))};
      const double ms = parse_number(value, where);
      if (!(ms > 0.0) || !std::isfinite(ms)) throw ParseError(where, "latency must be positive");
      if (!t.entries.emplace(k, ms).second) throw ParseError(where, "duplicate entry " + k.str());
    }
  }
  if (!titled) throw ParseError(path.string() + ":1", "empty file");
  return t;
}

// ---- search outputs ------------------------------------------------------

void save_pool(const fs::path& path, const SubnetPool& pool) {
  Header h = {{"budget_ms", format_number(pool.budget_ms)},
              {"window_lo", format_number(pool.window.lo)},
              {"window_hi", format_number(pool.window.hi)},
              {"levels", std::to_string(pool.levels)},
              {"band_lo", format_number(pool.band_lo)},
              {"band_hi", format_number(pool.band_hi)},
              {"optimal", std::to_string(pool.optimal)}};
  std::vector<std::vector<json>> rows;
  for (const auto& e : pool.entries) {
    rows.push_back({e.enc.arch(), e.latency, e.accuracy, e.relative_latency});
  }
  write_table_files(path, "edgeadapt pool v1", h,
                    {"arch", "latency_ms", "accuracy", "relative_latency"}, rows);
}

SubnetPool load_pool(const fs::path& path) {
  const ParsedTable t =
      read_table(path, "edgeadapt pool v1", {"arch", "latency_ms", "accuracy", "relative_latency"});
  const std::string w = path.string() + ":1";
  SubnetPool pool;
  pool.budget_ms = parse_number(header_value(t, "budget_ms", path), w);
  pool.window.lo = parse_number(header_value(t, "window_lo", path), w);
  pool.window.hi = parse_number(header_value(t, "window_hi", path), w);
  pool.levels = static_cast<size_t>(parse_int(header_value(t, "levels", path), w));
  pool.band_lo = parse_number(header_value(t, "band_lo", path), w);
  pool.band_hi = parse_number(header_value(t, "band_hi", path), w);
  pool.optimal = static_cast<size_t>(parse_int(header_value(t, "optimal", path), w));
  for (const auto& [ln, f] : t.rows) {
    const std::string where = path.string() + ":" + std::to_string(ln);
    pool.entries.push_back({parse_arch(f[0], where), parse_number(f[1], where),
                            parse_number(f[2], where), parse_number(f[3], where)});
  }
  if (!pool.entries.empty() && pool.optimal >= pool.entries.size()) {
    throw ParseError(w, "optimal index out of range");
  }
  return pool;
}

void save_history(const fs::path& path, const std::vector<HistoryRow>& history) {
  std::vector<std::vector<json>> rows;
  for (const auto& h : history) rows.push_back({h.generation, h.enc.arch(), h.latency, h.accuracy});
  write_table_files(path, "edgeadapt history v1", {},
                    {"generation", "arch", "latency_ms", "accuracy"}, rows);
}

std::vector<HistoryRow> load_history(const fs::path& path) {
  const ParsedTable t =
      read_table(path, "edgeadapt history v1", {"generation", "arch", "latency_ms", "accuracy"});
  std::vector<HistoryRow> out;
  for (const auto& [ln, f] : t.rows) {
    const std::string where = path.string() + ":" + std::to_string(ln);
    out.push_back({static_cast<int>(parse_int(f[0], where)), parse_arch(f[1], where),
                   parse_number(f[2], where), parse_number(f[3], where)});
  }
  return out;
}

void save_events(const fs::path& path, const std::vector<ServeEvent>& events) {
  std::vector<std::vector<json>> rows;
  for (const auto& e : events) {
    rows.push_back({e.t_ms, e.observed_ms, e.r, e.action, e.arch, e.projected_ms});
  }
  write_table_files(path, "edgeadapt serve log v1", {},
                    {"t_ms", "observed_ms", "r", "action", "arch", "projected_ms"}, rows);
}

void save_training_report(const fs::path& path, const TrainingReport& report) {
  Header h = {{"frozen_hash_before", report.frozen_hash_before},
              {"frozen_hash_after", report.frozen_hash_after},
              {"mean_subnet_accuracy", format_number(report.mean_subnet_accuracy)}};
  std::vector<std::vector<json>> rows;
  for (const auto& e : report.epochs) {
    if (e.bins.empty()) rows.push_back({e.epoch, e.phase, e.loss, nullptr, nullptr, 0, nullptr});
    for (const auto& b : e.bins) {
      rows.push_back({e.epoch, e.phase, e.loss, b.bin.low, b.bin.high, b.count, b.mean_accuracy});
    }
  }
  write_table_files(path, "edgeadapt training report v1", h,
                    {"epoch", "phase", "loss", "bin_low", "bin_high", "count", "mean_accuracy"}, rows);
}

}  // namespace edgeadapt
