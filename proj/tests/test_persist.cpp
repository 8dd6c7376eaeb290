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

#include <cmath>
#include <limits>
#include <random>

#include <doctest.h>

#include "edgeadapt/persist.hpp"
#include "toy.hpp"

using namespace edgeadapt;
using namespace edgeadapt::testing;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("edgeadapt-persist-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

const Toy& fixture() {
  static const Toy toy = [] {
    ToyOptions o;
    o.layers = 4;
    o.per_class = 40;
    o.pretrain_epochs = 3;
    return make_toy(o, false);
  }();
  return toy;
}

// Catches the ParseError and returns its location.
template <typename F>
std::string where_of(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.where();
  }
  return "<no error>";
}

void overwrite(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("numbers round-trip exactly") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(gen) * std::pow(10.0, static_cast<int>(gen() % 40) - 20);
    CHECK(parse_number(format_number(v), "x") == v);
  }
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(std::isinf(parse_number("inf", "x")));
  CHECK(parse_number("0.1", "x") == 0.1);
  CHECK_THROWS_AS(parse_number("1.5abc", "f:3"), ParseError);
  CHECK(where_of([] { parse_number("", "f:3"); }) == "f:3");
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("model round-trip is bitwise") {
  TempDir tmp;
  const Toy& t = fixture();
  save_model(tmp.path / "m", t.model, {{"note", "x"}});
  ToyClassifier back = load_model(tmp.path / "m");
  CHECK(back.layers == t.model.layers);
  CHECK(back.head == t.model.head);
  CHECK(back.tail == t.model.tail);
  CHECK(back.fusion_tags == t.model.fusion_tags);
  CHECK(back.stages == t.model.stages);
}

TEST_CASE("bundle round-trip, paging, and integrity") {
  TempDir tmp;
  const Toy& t = fixture();
  const fs::path dir = tmp.path / "bundle";
  save_bundle(dir, {t.graph, t.initial, {{"seed", 1}}});
  SupernetBundle back = load_bundle(dir);
  CHECK(back.weights.blocks == t.initial.blocks);
  CHECK(back.weights.head == t.initial.head);
  CHECK(back.weights.tail == t.initial.tail);
  CHECK(back.graph.variants() == t.graph.variants());
  CHECK(back.graph.positions() == t.graph.positions());
  CHECK(back.graph.gamma() == t.graph.gamma());
  CHECK(back.graph.input_dim == t.graph.input_dim);
  CHECK(back.graph.num_classes == t.graph.num_classes);
  CHECK(back.metadata.at("seed") == 1);

  BlobWeightStore store(dir);
  CHECK(store.head() == t.initial.head);
  CHECK(store.tail() == t.initial.tail);
  for (const auto& [key, units] : t.initial.blocks) {
    CHECK(store.contains(key));
    CHECK(store.load(key) == units);
  }
  CHECK_FALSE(store.contains({0, 9}));

  // Saving twice gives identical bytes.
  const std::string first = read_file(dir / "weights.bin");
  save_bundle(dir, {t.graph, t.initial, {{"seed", 1}}});
  CHECK(read_file(dir / "weights.bin") == first);

  SUBCASE("flipped byte fails the checksum") {
    std::string bytes = first;
    bytes[bytes.size() / 2] ^= 0x01;
    overwrite(dir / "weights.bin", bytes);
    CHECK(where_of([&] { load_bundle(dir); }) == (dir / "weights.bin").string() + "@0");
  }
  SUBCASE("truncated blob") {
    overwrite(dir / "weights.bin", first.substr(0, 3));
    CHECK_THROWS_AS(load_bundle(dir), ParseError);
  }
  SUBCASE("malformed descriptor reports a byte offset") {
    overwrite(dir / "supernet.json", "{\"format\": ");
    const std::string w = where_of([&] { load_bundle(dir); });
    CHECK(w.rfind((dir / "supernet.json").string() + "@", 0) == 0);
  }
}

TEST_CASE("blob header checks") {
  TempDir tmp;
  const Toy& t = fixture();
  const fs::path dir = tmp.path / "m";
  save_model(dir, t.model);
  std::string bytes = read_file(dir / "weights.bin");
  REQUIRE(bytes.substr(0, 4) == "EAWB");
  CHECK(static_cast<uint8_t>(bytes[4]) == kBlobVersion);
  CHECK(static_cast<uint8_t>(bytes[5]) == kBlobKindModel);
  // Header plus every value as a raw f64.
  CHECK(read_file(dir / "weights.bin").size() ==
        6 + 8 * (t.model.head.weight.size() + t.model.head.bias.size() + t.model.tail.weight.size() +
                 t.model.tail.bias.size() + [&] {
                   size_t n = 0;
                   for (const auto& l : t.model.layers) {
                     n += l.w1.size() + l.b1.size() + l.w2.size() + l.b2.size();
                   }
                   return n;
                 }()));
}

TEST_CASE("dataset round-trip and line errors") {
  TempDir tmp;
  const Toy& t = fixture();
  const fs::path p = tmp.path / "d.csv";
  save_dataset(p, t.val, {{"source", "blobs"}});
  std::map<std::string, std::string> header;
  Dataset back = load_dataset(p, &header);
  CHECK(back.x == t.val.x);
  CHECK(back.labels == t.val.labels);
  CHECK(back.classes == t.val.classes);
  CHECK(back.dim == t.val.dim);
  CHECK(header.at("source") == "blobs");
  CHECK(fs::exists(tmp.path / "d.jsonl"));

  // Break the value on the third data row.
  std::string text = read_file(p);
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  size_t header_lines = 0;
  while (lines[header_lines].rfind("#", 0) == 0) ++header_lines;
  const size_t bad = header_lines + 1 + 2;  // column row, then rows 0..2
  lines[bad] = lines[bad].substr(0, lines[bad].rfind(',')) + ",oops";
  std::string broken;
  for (const auto& l : lines) broken += l + "\n";
  overwrite(p, broken);
  CHECK(where_of([&] { load_dataset(p); }) == p.string() + ":" + std::to_string(bad + 1));

  overwrite(p, "");
  CHECK_THROWS_AS(load_dataset(p), ParseError);
}

TEST_CASE("latency table round-trip") {
  TempDir tmp;
  const Toy& t = fixture();
  const fs::path p = tmp.path / "table.txt";
  LatencyTable table = t.table;
  table.device_id = "edge-7";
  table.profiled_at_ms = 1234.5;
  save_table(p, table);
  LatencyTable back = load_table(p);
  CHECK(back.entries == table.entries);
  CHECK(back.device_id == "edge-7");
  CHECK(back.profiled_at_ms == 1234.5);

  std::string text = read_file(p);
  overwrite(p, text + "3:x 1.0\n");
  const size_t n = static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
  CHECK(where_of([&] { load_table(p); }) == p.string() + ":" + std::to_string(n + 1));
  overwrite(p, "hello\n");
  CHECK(where_of([&] { load_table(p); }) == p.string() + ":1");
}

TEST_CASE("pool and history round-trip") {
  TempDir tmp;
  SubnetPool pool;
  pool.budget_ms = 3.25;
  pool.window = LatencyWindow::around(3.25, 1.0);
  pool.window.hi = std::numeric_limits<double>::infinity();
  pool.levels = 4;
  pool.band_lo = 2.25;
  pool.band_hi = 4.0;
  pool.entries = {{SubnetEncoding::parse("0:1,2:0,3:0"), 2.5, 0.8125, 2.5 / 3.0},
                  {SubnetEncoding::parse("0:0,1:0,2:-1,3:0"), 3.0, 0.9, 1.0}};
  pool.optimal = 1;
  const fs::path p = tmp.path / "pool.csv";
  save_pool(p, pool);
  SubnetPool back = load_pool(p);
  CHECK(back.budget_ms == pool.budget_ms);
  CHECK(back.window.lo == pool.window.lo);
  CHECK(std::isinf(back.window.hi));
  CHECK(back.levels == 4);
  CHECK(back.band_lo == 2.25);
  CHECK(back.band_hi == 4.0);
  CHECK(back.optimal == 1);
  REQUIRE(back.entries.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.entries[i].enc == pool.entries[i].enc);
    CHECK(back.entries[i].latency == pool.entries[i].latency);
    CHECK(back.entries[i].accuracy == pool.entries[i].accuracy);
    CHECK(back.entries[i].relative_latency == pool.entries[i].relative_latency);
  }

  std::vector<HistoryRow> hist = {{0, SubnetEncoding::parse("0:0,1:0,2:0,3:0"), 4.0, 0.91},
                                  {1, SubnetEncoding::parse("0:2,3:-2"), 1.1, 0.4}};
  const fs::path h = tmp.path / "history.csv";
  save_history(h, hist);
  auto hb = load_history(h);
  REQUIRE(hb.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(hb[i].generation == hist[i].generation);
    CHECK(hb[i].enc == hist[i].enc);
    CHECK(hb[i].latency == hist[i].latency);
    CHECK(hb[i].accuracy == hist[i].accuracy);
  }

  // A malformed row is reported by its own line number.
  std::string text = read_file(h);
  const size_t lines = static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
  overwrite(h, text + "2,x\n");
  CHECK(where_of([&] { load_history(h); }) == h.string() + ":" + std::to_string(lines + 1));
}

TEST_CASE("atomic writes leave no temporaries") {
  TempDir tmp;
  write_file_atomic(tmp.path / "a.txt", "one");
  write_file_atomic(tmp.path / "a.txt", "two");
  CHECK(read_file(tmp.path / "a.txt") == "two");
  size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path)) ++files;
  CHECK(files == 1);
  CHECK_THROWS_AS(read_file(tmp.path / "missing"), Error);
}
