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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
  json line() const { return json::parse(out.substr(0, out.find('\n'))); }
  json error() const { return json::parse(err.substr(0, err.find('\n'))); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("edgeadapt-cli-" + std::to_string(rd()));
    fs::create_directories(dir);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }

  Run cli(const std::string& args) const {
    const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
    const std::string cmd = std::string(EDGEADAPT_CLI_PATH) + " " + args + " >" + o.string() +
                            " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
  }
};

// Small end-to-end inputs shared by the cases below.
void build_pipeline(const Workspace& w) {
  REQUIRE(w.cli("dataset --classes 4 --dim 6 --per-class 60 --seed 1 --out " + w.p("data.csv")).code == 0);
  REQUIRE(w.cli("dataset --kind dirichlet-shift --base " + w.p("data.csv") +
                " --alpha 0.5 --size 120 --seed 2 --out " + w.p("edge.csv"))
              .code == 0);
  REQUIRE(w.cli("pretrain --data " + w.p("data.csv") +
                " --layers 4 --dim 8 --width 12 --epochs 10 --seed 3 --out " + w.p("model"))
              .code == 0);
  REQUIRE(w.cli("elasticize --model " + w.p("model") + " --seed 4 --out " + w.p("bundle")).code == 0);
  REQUIRE(w.cli("train --bundle " + w.p("bundle") + " --data " + w.p("data.csv") +
                " --distill-epochs 2 --tune-epochs 2 --eval-subnets 8 --seed 5 --out " +
                w.p("trained"))
              .code == 0);
  REQUIRE(w.cli("profile --bundle " + w.p("trained") + " --runs 9 --seed 6 --out " + w.p("table.txt"))
              .code == 0);
}

}  // namespace

TEST_CASE("usage errors exit 2 with a JSON line") {
  Workspace w;
  Run none = w.cli("");
  CHECK(none.code == 2);
  CHECK(none.error().at("kind") == "usage");
  Run missing = w.cli("search --table x");
  CHECK(missing.code == 2);
  CHECK(missing.error().at("kind") == "usage");
  CHECK(w.cli("--help").code == 0);
  CHECK(w.cli("frobnicate").code == 2);
}

TEST_CASE("runtime and parse errors exit 1") {
  Workspace w;
  Run r = w.cli("count --bundle " + w.p("nothing"));
  CHECK(r.code == 1);
  CHECK(r.error().at("kind") == "runtime");
  CHECK(r.out.empty());

  {
    std::ofstream bad(w.p("bad.csv"));
    bad << "# edgeadapt dataset v1\n# dim=2\n# classes=2\nlabel,x0,x1\n0,1.0,2.0\n1,zz,2.0\n";
  }
  Run p = w.cli("dataset --kind dirichlet-shift --base " + w.p("bad.csv") + " --out " + w.p("o.csv"));
  CHECK(p.code == 1);
  CHECK(p.error().at("kind") == "parse");
  CHECK(p.error().at("where") == w.p("bad.csv") + ":6");

  Run k = w.cli("dataset --kind nope --out " + w.p("o.csv"));
  CHECK(k.code == 1);
  CHECK(k.error().at("error").get<std::string>().find("unknown dataset kind") != std::string::npos);
}

TEST_CASE("pipeline commands report JSON summaries") {
  Workspace w;
  build_pipeline(w);

  Run count = w.cli("count --bundle " + w.p("trained"));
  REQUIRE(count.code == 0);
  CHECK(count.line().at("subnets") == "115");
  CHECK(count.line().at("positions") == 4);

  json meta = json::parse(slurp(w.dir / "trained" / "supernet.json")).at("metadata");
  json before = json::parse(slurp(w.dir / "bundle" / "supernet.json")).at("metadata");
  CHECK(meta.at("frozen_params_sha256") == before.at("frozen_params_sha256"));
  CHECK(meta.at("stage") == "trained");
  CHECK(fs::exists(w.dir / "trained" / "training_report.csv"));

  for (const std::string strategy : {"guided", "plain", "anneal", "oracle"}) {
    CAPTURE(strategy);
    Run s = w.cli("search --bundle " + w.p("trained") + " --table " + w.p("table.txt") + " --data " +
                  w.p("edge.csv") + " --strategy " + strategy +
                  " --population 10 --iters 3 --delta-frac 0.5 --seed 7 --out " +
                  w.p("search-" + strategy));
    REQUIRE(s.code == 0);
    const json line = s.line();
    CHECK(line.at("strategy") == strategy);
    CHECK(line.at("latency_ms").get<double>() <= line.at("budget_ms").get<double>());
    CHECK(line.at("block_forwards").get<long>() <= line.at("naive_block_forwards").get<long>());
    CHECK(fs::exists(w.dir / ("search-" + strategy) / "pool.csv"));
    CHECK(fs::exists(w.dir / ("search-" + strategy) / "history.jsonl"));
    const json best = json::parse(slurp(w.dir / ("search-" + strategy) / "best.json"));
    CHECK(best.at("arch") == line.at("arch"));
  }
  // With an unbounded budget the oracle evaluates every subnet.
  Run all = w.cli("search --bundle " + w.p("trained") + " --table " + w.p("table.txt") +
                  " --data " + w.p("edge.csv") + " --strategy oracle --budget-ms 1e9 --out " +
                  w.p("search-all"));
  REQUIRE(all.code == 0);
  CHECK(all.line().at("evaluations") == 115);

  Run bad = w.cli("search --bundle " + w.p("trained") + " --table " + w.p("table.txt") +
                  " --data " + w.p("edge.csv") + " --strategy magic --out " + w.p("s"));
  CHECK(bad.code == 1);

  Run serve = w.cli("serve --bundle " + w.p("trained") + " --pool " + w.p("search-guided/pool.csv") +
                    " --table " + w.p("table.txt") + " --scenario flat --duration-ms 1000 --out " +
                    w.p("serve"));
  REQUIRE(serve.code == 0);
  CHECK(serve.line().at("requests") == 11);
  CHECK(serve.line().at("swaps") == 0);
  CHECK(fs::exists(w.dir / "serve" / "events.csv"));
  CHECK(fs::exists(w.dir / "serve" / "final_pool.csv"));
}
