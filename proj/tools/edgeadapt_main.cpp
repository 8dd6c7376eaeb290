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

// edgeadapt command-line tool. Every subcommand prints one JSON summary line
// on stdout; failures print one JSON error line on stderr and exit nonzero.

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgeadapt/dataset.hpp"
#include "edgeadapt/elastic.hpp"
#include "edgeadapt/evalcache.hpp"
#include "edgeadapt/graph.hpp"
#include "edgeadapt/latsim.hpp"
#include "edgeadapt/persist.hpp"
#include "edgeadapt/runtime.hpp"
#include "edgeadapt/search.hpp"

namespace ea = edgeadapt;
using nlohmann::json;

namespace {

struct DatasetArgs {
  std::string kind = "blobs";
  size_t classes = 8;
  size_t dim = 8;
  size_t per_class = 250;
  double separation = 4.0;
  std::string base;
  double alpha = 0.5;
  size_t size = 600;
  uint64_t seed = 0;
  std::string out;
};

struct PretrainArgs {
  std::string data;
  size_t layers = 6;
  size_t dim = 16;
  size_t width = 24;
  int epochs = 80;
  double lr = 0.02;
  size_t batch = 32;
  std::vector<int> fusion_tags;
  std::vector<int> stages;
  uint64_t seed = 0;
  std::string out;
};

struct ElasticizeArgs {
  std::string model;
  double gamma = 1.0;
  int max_merge = 2;
  std::vector<double> shrink_rates = {0.5, 0.25};
  uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string bundle;
  std::string data;
  ea::TrainConfig config;
  double val_frac = 0.2;
  size_t bins = 5;
  std::string out;
};

struct ProfileArgs {
  std::string bundle;
  std::string preset = "xiaomi12";
  std::optional<double> noise;
  int runs = 99;
  uint64_t seed = 0;
  std::string out;
};

struct SearchArgs {
  std::string bundle;
  std::string table;
  std::string data;
  std::string strategy = "guided";
  std::optional<double> budget_ms;
  double budget_frac = 0.9;
  double delta_frac = 0.1;
  size_t population = 50;
  int iters = 20;
  size_t depth_cap = 4;
  size_t levels = 10;
  double temperature = 0.05;
  double cooling = 0.97;
  uint64_t seed = 0;
  std::string out;
};

struct ServeArgs {
  std::string bundle;
  std::string pool;
  std::string table;
  std::string data;
  std::string preset = "ideal";
  double noise = 0.0;
  std::string scenario = "flat";
  double event_ms = 2000.0;
  double recover_ms = 4000.0;
  double duration_ms = 6000.0;
  double interval_ms = 100.0;
  std::optional<double> budget_ms;
  size_t population = 50;
  int iters = 20;
  double delta_frac = 0.7;
  size_t depth_cap = 4;
  uint64_t seed = 0;
  std::string out;
};

void emit(const json& j) { std::cout << j.dump() << "\n"; }

json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return ea::format_number(v);
}

int run_dataset(const DatasetArgs& a) {
  if (a.kind == "blobs") {
    ea::Dataset d = ea::make_blobs(a.classes, a.dim, a.per_class, a.separation, a.seed);
    ea::save_dataset(a.out, d,
                     {{"kind", "blobs"},
                      {"separation", ea::format_number(a.separation)},
                      {"seed", std::to_string(a.seed)}});
    emit({{"command", "dataset"}, {"kind", a.kind}, {"rows", d.size()}, {"out", a.out}});
    return 0;
  }
  if (a.kind == "dirichlet-shift") {
    if (a.base.empty()) throw ea::Error("dirichlet-shift needs --base");
    const ea::Dataset base = ea::load_dataset(a.base);
    ea::EdgeDataset e = ea::make_edge_dataset(base, a.alpha, a.size, a.seed);
    std::string props;
    for (double p : e.class_proportions) props += (props.empty() ? "" : " ") + ea::format_number(p);
    ea::save_dataset(a.out, e.data,
                     {{"kind", "dirichlet-shift"},
                      {"alpha", ea::format_number(a.alpha)},
                      {"proportions", props},
                      {"seed", std::to_string(a.seed)}});
    emit({{"command", "dataset"},
          {"kind", a.kind},
          {"rows", e.data.size()},
          {"proportions", e.class_proportions},
          {"out", a.out}});
    return 0;
  }
  throw ea::Error("unknown dataset kind '" + a.kind + "' (known: blobs, dirichlet-shift)");
}

int run_pretrain(const PretrainArgs& a) {
  const ea::Dataset data = ea::load_dataset(a.data);
  ea::ToyArchitecture arch = ea::ToyArchitecture::uniform(a.layers, a.dim, a.width);
  arch.fusion_tags = a.fusion_tags;
  arch.stages = a.stages;
  const ea::ToyClassifier model = ea::pretrain_toy(data, arch, a.epochs, a.lr, a.seed, a.batch);
  const double acc = ea::classifier_accuracy(model, data);
  ea::save_model(a.out, model,
                 {{"seed", a.seed}, {"epochs", a.epochs}, {"lr", a.lr}, {"train_accuracy", acc}});
  emit({{"command", "pretrain"}, {"layers", a.layers}, {"train_accuracy", acc}, {"out", a.out}});
  return 0;
}

int run_elasticize(const ElasticizeArgs& a) {
  const ea::ToyClassifier model = ea::load_model(a.model);
  const std::vector<ea::ChainLayer> layers = model.chain_layers();
  std::vector<ea::BlockPosition> blocks = ea::partition_blocks(layers, a.gamma);
  uint64_t p0 = 0;
  for (const auto& l : layers) p0 += l.param_size;
  ea::SupernetBundle b;
  b.graph = ea::expand_graph(std::move(blocks), a.max_merge, a.shrink_rates, a.gamma, p0);
  b.graph.input_dim = model.input_dim();
  b.graph.num_classes = model.num_classes();
  b.weights = ea::init_supernet_weights(model, b.graph, a.seed);
  const std::string source_hash = ea::sha256_hex(ea::read_file(ea::fs::path(a.model) / "weights.bin"));
  b.metadata = {{"stage", "elasticized"},
                {"seed", a.seed},
                {"max_merge", a.max_merge},
                {"shrink_rates", a.shrink_rates},
                {"source_weights_sha256", source_hash},
                {"frozen_params_sha256", ea::frozen_params_hash(b.weights)}};
  ea::save_bundle(a.out, b);
  const auto out = ea::fs::path(a.out);
  emit({{"command", "elasticize"},
        {"positions", b.graph.size()},
        {"variants", b.graph.variants().size()},
        {"subnets", ea::count_subnets(b.graph).str()},
        {"original_weights_bytes", ea::fs::file_size(ea::fs::path(a.model) / "weights.bin")},
        {"bundle_weights_bytes", ea::fs::file_size(out / "weights.bin")},
        {"descriptor_bytes", ea::fs::file_size(out / "supernet.json")},
        {"out", a.out}});
  return 0;
}

int run_train(TrainArgs a) {
  ea::SupernetBundle b = ea::load_bundle(a.bundle);
  const ea::Dataset data = ea::load_dataset(a.data);
  auto [train, val] = ea::split_dataset(data, a.val_frac, ea::Rng::derive(a.config.seed, "split"));
  const ea::LatencyTable table = ea::nominal_table(ea::make_env(b.graph, "ideal"));
  if (a.config.latency_bins.empty()) a.config.latency_bins = ea::default_latency_bins(b.graph, table, a.bins);
  ea::TrainResult r = ea::train_supernet(std::move(b.weights), b.graph, a.config, train, val, table);
  b.weights = std::move(r.weights);
  b.metadata["stage"] = "trained";
  b.metadata["training"] = {{"distill_epochs", a.config.distill_epochs},
                            {"tune_epochs", a.config.tune_epochs},
                            {"lr_distill", a.config.lr_distill},
                            {"lr_tune", a.config.lr_tune},
                            {"batch_size", a.config.batch_size},
                            {"seed", a.config.seed},
                            {"data_sha256", ea::sha256_hex(ea::read_file(a.data))},
                            {"mean_subnet_accuracy", r.report.mean_subnet_accuracy}};
  b.metadata["frozen_params_sha256"] = r.report.frozen_hash_after;
  ea::save_bundle(a.out, b);
  ea::save_training_report(ea::fs::path(a.out) / "training_report.csv", r.report);
  emit({{"command", "train"},
        {"epochs", r.report.epochs.size()},
        {"final_loss", r.report.epochs.empty() ? 0.0 : r.report.epochs.back().loss},
        {"mean_subnet_accuracy", r.report.mean_subnet_accuracy},
        {"frozen_unchanged", r.report.frozen_hash_before == r.report.frozen_hash_after},
        {"out", a.out}});
  return 0;
}

int run_profile(const ProfileArgs& a) {
  const ea::SupernetGraph g = ea::load_bundle_graph(a.bundle);
  const ea::DevicePreset& preset = ea::find_device_preset(a.preset);
  const ea::EnvProfile env = ea::make_env(g, a.preset, a.noise.value_or(preset.default_noise));
  const ea::ProfileResult r = ea::profile_blocks(g, env, a.runs, a.seed);
  ea::save_table(a.out, r.table);
  emit({{"command", "profile"},
        {"device", env.device_id},
        {"entries", r.table.entries.size()},
        {"timings", r.timings},
        {"out", a.out}});
  return 0;
}

int run_search(const SearchArgs& a) {
  const ea::SupernetBundle b = ea::load_bundle(a.bundle);
  const ea::LatencyTable table = ea::load_table(a.table);
  table.check_covers(b.graph);
  const ea::Dataset data = ea::load_dataset(a.data);
  const double budget =
      a.budget_ms ? *a.budget_ms : a.budget_frac * ea::subnet_latency(table, ea::all_original_subnet(b.graph));
  ea::GroupEvaluator evaluator(b.weights, data, table, a.depth_cap);
  ea::Evaluator eval = [&](const std::vector<ea::SubnetEncoding>& c) { return evaluator(c); };

  ea::SearchConfig cfg;
  cfg.budget_ms = budget;
  cfg.delta_ms = a.delta_frac * budget;
  cfg.population = a.population;
  cfg.search_times = a.iters;
  cfg.seed = a.seed;
  cfg.initial_temperature = a.temperature;
  cfg.cooling = a.cooling;

  ea::SearchResult r;
  ea::LatencyWindow window = ea::LatencyWindow::around(budget, cfg.delta_ms);
  if (a.strategy == "guided") {
    r = ea::evolutionary_search(b.graph, table, cfg, eval);
  } else if (a.strategy == "plain") {
    r = ea::plain_evolutionary(b.graph, table, cfg, eval);
    window = ea::LatencyWindow{};
  } else if (a.strategy == "anneal") {
    r = ea::simulated_annealing(b.graph, table, cfg, eval);
  } else if (a.strategy == "oracle") {
    r = ea::exhaustive_oracle(b.graph, table, budget, eval);
    window = ea::LatencyWindow{0.0, budget};
  } else {
    throw ea::Error("unknown strategy '" + a.strategy + "' (known: guided, plain, anneal, oracle)");
  }
  if (!r.found) throw ea::Error("no evaluated subnet within budget");
  const ea::fs::path out(a.out);
  const ea::SubnetPool pool = ea::build_pool(r.history, window, budget, a.levels);
  ea::save_pool(out / "pool.csv", pool);
  ea::save_history(out / "history.csv", r.history);
  const json best = {{"arch", r.best.enc.arch()},
                     {"latency_ms", r.best.latency},
                     {"accuracy", *r.best.accuracy},
                     {"budget_ms", budget},
                     {"strategy", a.strategy},
                     {"evaluations", r.evaluations},
                     {"block_forwards", evaluator.block_forwards()},
                     {"naive_block_forwards", evaluator.naive_forwards()}};
  ea::write_file_atomic(out / "best.json", best.dump(2) + "\n");
  json line = best;
  line["command"] = "search";
  line["pool_entries"] = pool.entries.size();
  line["out"] = a.out;
  emit(line);
  return 0;
}

int run_serve(const ServeArgs& a) {
  const ea::BlobWeightStore store(a.bundle);
  const ea::SupernetGraph& g = store.graph();
  const ea::LatencyTable table = ea::load_table(a.table);
  table.check_covers(g);
  const ea::SubnetPool pool = ea::load_pool(a.pool);
  if (pool.empty()) throw ea::Error("pool file has no entries");
  ea::ServeConfig cfg;
  cfg.budget_ms = a.budget_ms.value_or(pool.budget_ms);
  cfg.duration_ms = a.duration_ms;
  cfg.request_interval_ms = a.interval_ms;
  cfg.seed = a.seed;
  cfg.research_population = a.population;
  cfg.research_iterations = a.iters;
  cfg.research_delta_frac = a.delta_frac;
  cfg.pool_levels = pool.levels;
  const ea::EnvProfile env =
      ea::make_env(g, a.preset, a.noise, ea::scenario_timeline(a.scenario, a.event_ms, a.recover_ms));

  // Research needs accuracies; load the full weights only when data is given.
  std::optional<ea::SupernetBundle> full;
  std::optional<ea::Dataset> data;
  std::optional<ea::GroupEvaluator> evaluator;
  if (!a.data.empty()) {
    full = ea::load_bundle(a.bundle);
    data = ea::load_dataset(a.data);
    evaluator.emplace(full->weights, *data, table, a.depth_cap);
  }
  ea::Evaluator eval = [&](const std::vector<ea::SubnetEncoding>& c) -> std::vector<double> {
    if (!evaluator) throw ea::Error("re-search needs --data");
    return (*evaluator)(c);
  };
  ea::ServingModel model(store, g, pool.optimal_entry().enc);
  const ea::ServeLog log = ea::serve_loop(env, pool, model, g, table, cfg, eval);
  const ea::fs::path out(a.out);
  ea::save_events(out / "events.csv", log.events);
  ea::save_pool(out / "final_pool.csv", log.final_pool);
  emit({{"command", "serve"},
        {"scenario", a.scenario},
        {"requests", log.events.size()},
        {"swaps", log.swaps},
        {"researches", log.researches},
        {"final_arch", log.events.empty() ? "" : log.events.back().arch},
        {"final_projected_ms", log.events.empty() ? json(nullptr) : number_or_string(log.events.back().projected_ms)},
        {"budget_ms", cfg.budget_ms},
        {"out", a.out}});
  return 0;
}

int run_count(const std::string& bundle) {
  const ea::SupernetGraph g = ea::load_bundle_graph(bundle);
  emit({{"command", "count"},
        {"positions", g.size()},
        {"variants", g.variants().size()},
        {"subnets", ea::count_subnets(g).str()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgeadapt: post-deployment supernet elastification, search, and serving"};
  app.require_subcommand(1);

  DatasetArgs ds;
  auto* c_ds = app.add_subcommand("dataset", "Generate a blobs dataset or a Dirichlet-shifted resample");
  c_ds->add_option("--kind", ds.kind, "blobs | dirichlet-shift");
  c_ds->add_option("--classes", ds.classes);
  c_ds->add_option("--dim", ds.dim);
  c_ds->add_option("--per-class", ds.per_class);
  c_ds->add_option("--separation", ds.separation);
  c_ds->add_option("--base", ds.base, "Base dataset for dirichlet-shift");
  c_ds->add_option("--alpha", ds.alpha, "Dirichlet concentration");
  c_ds->add_option("--size", ds.size, "Rows of the shifted dataset");
  c_ds->add_option("--seed", ds.seed);
  c_ds->add_option("--out", ds.out)->required();

  PretrainArgs pt;
  auto* c_pt = app.add_subcommand("pretrain", "Train the chain model to elasticize");
  c_pt->add_option("--data", pt.data)->required();
  c_pt->add_option("--layers", pt.layers);
  c_pt->add_option("--dim", pt.dim);
  c_pt->add_option("--width", pt.width);
  c_pt->add_option("--epochs", pt.epochs);
  c_pt->add_option("--lr", pt.lr);
  c_pt->add_option("--batch", pt.batch);
  c_pt->add_option("--fusion-tags", pt.fusion_tags, "Per-layer fusion tags (-1: none)")->delimiter(',');
  c_pt->add_option("--stages", pt.stages, "Per-layer stage ids")->delimiter(',');
  c_pt->add_option("--seed", pt.seed);
  c_pt->add_option("--out", pt.out)->required();

  ElasticizeArgs el;
  auto* c_el = app.add_subcommand("elasticize", "Build a supernet bundle from a pretrained model");
  c_el->add_option("--model", el.model)->required();
  c_el->add_option("--gamma", el.gamma, "Block size cap as a fraction of model parameters");
  c_el->add_option("--max-merge", el.max_merge);
  c_el->add_option("--shrink-rates", el.shrink_rates)->delimiter(',');
  c_el->add_option("--seed", el.seed);
  c_el->add_option("--out", el.out)->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Distill then tune the new branches");
  c_tr->add_option("--bundle", tr.bundle)->required();
  c_tr->add_option("--data", tr.data)->required();
  c_tr->add_option("--distill-epochs", tr.config.distill_epochs);
  c_tr->add_option("--tune-epochs", tr.config.tune_epochs);
  c_tr->add_option("--lr-distill", tr.config.lr_distill);
  c_tr->add_option("--lr-tune", tr.config.lr_tune);
  c_tr->add_option("--batch", tr.config.batch_size);
  c_tr->add_option("--eval-subnets", tr.config.eval_subnet_samples);
  c_tr->add_option("--bins", tr.bins, "Latency bins for progress reports");
  c_tr->add_option("--val-frac", tr.val_frac);
  c_tr->add_option("--seed", tr.config.seed);
  c_tr->add_option("--out", tr.out)->required();

  ProfileArgs pr;
  auto* c_pr = app.add_subcommand("profile", "Build a latency table on a simulated device");
  c_pr->add_option("--bundle", pr.bundle)->required();
  c_pr->add_option("--env-preset", pr.preset);
  c_pr->add_option("--noise", pr.noise, "Jitter fraction (default: preset)");
  c_pr->add_option("--runs", pr.runs);
  c_pr->add_option("--seed", pr.seed);
  c_pr->add_option("--out", pr.out)->required();

  SearchArgs se;
  auto* c_se = app.add_subcommand("search", "Search for the best subnet under a latency budget");
  c_se->add_option("--bundle", se.bundle)->required();
  c_se->add_option("--table", se.table)->required();
  c_se->add_option("--data", se.data)->required();
  c_se->add_option("--strategy", se.strategy, "guided | plain | anneal | oracle");
  c_se->add_option("--budget-ms", se.budget_ms);
  c_se->add_option("--budget-frac", se.budget_frac, "Budget as a fraction of the original model's latency");
  c_se->add_option("--delta-frac", se.delta_frac, "Window half-width as a fraction of the budget");
  c_se->add_option("--population", se.population);
  c_se->add_option("--iters", se.iters);
  c_se->add_option("--depth-cap", se.depth_cap);
  c_se->add_option("--levels", se.levels, "Pool latency bands");
  c_se->add_option("--temperature", se.temperature);
  c_se->add_option("--cooling", se.cooling);
  c_se->add_option("--seed", se.seed);
  c_se->add_option("--out", se.out)->required();

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Serve under a scripted latency scenario");
  c_sv->add_option("--bundle", sv.bundle)->required();
  c_sv->add_option("--pool", sv.pool)->required();
  c_sv->add_option("--table", sv.table)->required();
  c_sv->add_option("--data", sv.data, "Edge data for re-search");
  c_sv->add_option("--env-preset", sv.preset);
  c_sv->add_option("--noise", sv.noise);
  c_sv->add_option("--scenario", sv.scenario, "flat | step-x2 | step-x2-back | step-x3");
  c_sv->add_option("--event-ms", sv.event_ms);
  c_sv->add_option("--recover-ms", sv.recover_ms);
  c_sv->add_option("--duration-ms", sv.duration_ms);
  c_sv->add_option("--interval-ms", sv.interval_ms);
  c_sv->add_option("--budget-ms", sv.budget_ms, "Default: the pool's budget");
  c_sv->add_option("--population", sv.population);
  c_sv->add_option("--iters", sv.iters);
  c_sv->add_option("--delta-frac", sv.delta_frac, "Re-search window half-width fraction");
  c_sv->add_option("--depth-cap", sv.depth_cap);
  c_sv->add_option("--seed", sv.seed);
  c_sv->add_option("--out", sv.out)->required();

  std::string count_bundle;
  auto* c_ct = app.add_subcommand("count", "Count the subnets of a bundle");
  c_ct->add_option("--bundle", count_bundle)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << "\n";
    return 2;
  }

  try {
    if (*c_ds) return run_dataset(ds);
    if (*c_pt) return run_pretrain(pt);
    if (*c_el) return run_elasticize(el);
    if (*c_tr) return run_train(tr);
    if (*c_pr) return run_profile(pr);
    if (*c_se) return run_search(se);
    if (*c_sv) return run_serve(sv);
    if (*c_ct) return run_count(count_bundle);
  } catch (const ea::ParseError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "parse"}, {"where", e.where()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "runtime"}}.dump() << "\n";
    return 1;
  }
  return 1;
}
