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

// Python bindings for the edgeadapt core.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "edgeadapt/dataset.hpp"
#include "edgeadapt/elastic.hpp"
#include "edgeadapt/evalcache.hpp"
#include "edgeadapt/graph.hpp"
#include "edgeadapt/latsim.hpp"
#include "edgeadapt/persist.hpp"
#include "edgeadapt/runtime.hpp"
#include "edgeadapt/search.hpp"

namespace py = pybind11;
namespace ea = edgeadapt;

namespace {

py::array_t<double> to_numpy(const ea::DenseArray& a) {
  py::array_t<double> out({a.rows(), a.cols()});
  std::copy(a.values().begin(), a.values().end(), out.mutable_data());
  return out;
}

ea::Dataset dataset_from_numpy(py::array_t<double, py::array::c_style | py::array::forcecast> x,
                               std::vector<int> labels, size_t classes) {
  if (x.ndim() != 2) throw ea::Error("features must be a 2-D array");
  const size_t rows = static_cast<size_t>(x.shape(0)), cols = static_cast<size_t>(x.shape(1));
  if (rows != labels.size()) throw ea::Error("feature rows and labels differ in length");
  for (int l : labels) {
    if (l < 0 || static_cast<size_t>(l) >= classes) throw ea::Error("label outside [0, classes)");
  }
  ea::Dataset d;
  d.dim = cols;
  d.classes = classes;
  d.x = ea::DenseArray({rows, cols}, std::vector<double>(x.data(), x.data() + rows * cols));
  d.labels = std::move(labels);
  return d;
}

// Same construction as the command-line "elasticize" step.
ea::SupernetGraph elasticize(const ea::ToyClassifier& model, double gamma, int max_merge,
                             const std::vector<double>& shrink_rates) {
  const std::vector<ea::ChainLayer> layers = model.chain_layers();
  uint64_t p0 = 0;
  for (const auto& l : layers) p0 += l.param_size;
  ea::SupernetGraph g =
      ea::expand_graph(ea::partition_blocks(layers, gamma), max_merge, shrink_rates, gamma, p0);
  g.input_dim = model.input_dim();
  g.num_classes = model.num_classes();
  return g;
}

py::dict report_dict(const ea::TrainingReport& r) {
  py::list epochs;
  for (const auto& e : r.epochs) {
    py::list bins;
    for (const auto& b : e.bins) {
      bins.append(py::dict(py::arg("low") = b.bin.low, py::arg("high") = b.bin.high,
                           py::arg("count") = b.count, py::arg("mean_accuracy") = b.mean_accuracy));
    }
    epochs.append(py::dict(py::arg("epoch") = e.epoch, py::arg("phase") = e.phase,
                           py::arg("loss") = e.loss, py::arg("bins") = bins));
  }
  return py::dict(py::arg("epochs") = epochs, py::arg("frozen_hash_before") = r.frozen_hash_before,
                  py::arg("frozen_hash_after") = r.frozen_hash_after,
                  py::arg("mean_subnet_accuracy") = r.mean_subnet_accuracy);
}

}  // namespace

PYBIND11_MODULE(_edgeadapt, m) {
  m.doc() = "Elastic supernets, latency-aware subnet search, and runtime adaptation";

  // Later registrations are tried first, so the subclass goes last.
  auto& error = py::register_exception<ea::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ea::ParseError>(m, "ParseError", error.ptr());

  // ---- encodings and graphs
  py::class_<ea::VariantKey>(m, "VariantKey")
      .def(py::init([](int start, int degree) { return ea::VariantKey{start, degree}; }),
           py::arg("start"), py::arg("degree"))
      .def_readonly("start", &ea::VariantKey::start)
      .def_readonly("degree", &ea::VariantKey::degree)
      .def("end", &ea::VariantKey::end)
      .def("__str__", &ea::VariantKey::str)
      .def("__repr__", [](const ea::VariantKey& k) { return "VariantKey(" + k.str() + ")"; })
      .def("__eq__", [](const ea::VariantKey& a, const ea::VariantKey& b) { return a == b; })
      .def("__hash__", [](const ea::VariantKey& k) { return py::hash(py::make_tuple(k.start, k.degree)); });

  py::class_<ea::SubnetEncoding>(m, "SubnetEncoding")
      .def(py::init<std::vector<ea::VariantKey>>())
      .def_static("parse", &ea::SubnetEncoding::parse)
      .def("arch", &ea::SubnetEncoding::arch)
      .def("choices", &ea::SubnetEncoding::choices)
      .def("new_block_count", &ea::SubnetEncoding::new_block_count)
      .def("__len__", &ea::SubnetEncoding::size)
      .def("__str__", &ea::SubnetEncoding::arch)
      .def("__repr__", [](const ea::SubnetEncoding& e) { return "SubnetEncoding('" + e.arch() + "')"; })
      .def("__eq__", [](const ea::SubnetEncoding& a, const ea::SubnetEncoding& b) { return a == b; })
      .def("__hash__", [](const ea::SubnetEncoding& e) { return py::hash(py::str(e.arch())); });

  py::class_<ea::SupernetGraph>(m, "SupernetGraph")
      .def_property_readonly("size", &ea::SupernetGraph::size)
      .def_property_readonly("gamma", &ea::SupernetGraph::gamma)
      .def_readonly("input_dim", &ea::SupernetGraph::input_dim)
      .def_readonly("num_classes", &ea::SupernetGraph::num_classes)
      .def("variants", [](const ea::SupernetGraph& g) {
        std::vector<ea::VariantKey> keys;
        for (const auto& [k, v] : g.variants()) keys.push_back(k);
        return keys;
      })
      .def("variants_at", &ea::SupernetGraph::variants_at);

  m.def("count_subnets", [](const ea::SupernetGraph& g) {
    return py::int_(py::str(ea::count_subnets(g).str()));
  });
  m.def("enumerate_subnets", &ea::enumerate_subnets, py::arg("graph"), py::arg("cap") = 10000);
  m.def("sample_uniform_subnet", &ea::sample_uniform_subnet, py::arg("graph"), py::arg("seed"));
  m.def("all_original_subnet", &ea::all_original_subnet);
  m.def("validate_subnet", &ea::validate_subnet,
        "None if the encoding is a valid path, else the first violation");

  // ---- data and models
  py::class_<ea::Dataset>(m, "Dataset")
      .def(py::init(&dataset_from_numpy), py::arg("x"), py::arg("labels"), py::arg("classes"))
      .def_readonly("dim", &ea::Dataset::dim)
      .def_readonly("classes", &ea::Dataset::classes)
      .def_readonly("labels", &ea::Dataset::labels)
      .def_property_readonly("x", [](const ea::Dataset& d) { return to_numpy(d.x); })
      .def("__len__", &ea::Dataset::size)
      .def("slice", &ea::Dataset::slice)
      .def("class_counts", &ea::Dataset::class_counts);

  m.def("make_blobs", &ea::make_blobs, py::arg("classes"), py::arg("dim"), py::arg("per_class"),
        py::arg("separation"), py::arg("seed"), py::arg("clusters_per_class") = 1);
  m.def("split_dataset", &ea::split_dataset, py::arg("data"), py::arg("second_fraction"),
        py::arg("seed"));
  m.def(
      "make_edge_dataset",
      [](const ea::Dataset& base, double alpha, size_t size, uint64_t seed) {
        ea::EdgeDataset e = ea::make_edge_dataset(base, alpha, size, seed);
        return py::make_tuple(std::move(e.data), e.class_proportions);
      },
      py::arg("base"), py::arg("alpha"), py::arg("size"), py::arg("seed"),
      "Dirichlet-shifted resample; returns (dataset, class_proportions)");

  py::class_<ea::ToyArchitecture>(m, "ToyArchitecture")
      .def_static("uniform", &ea::ToyArchitecture::uniform, py::arg("layers"), py::arg("dim"),
                  py::arg("width"))
      .def_readwrite("dim", &ea::ToyArchitecture::dim)
      .def_readwrite("widths", &ea::ToyArchitecture::widths)
      .def_readwrite("fusion_tags", &ea::ToyArchitecture::fusion_tags)
      .def_readwrite("stages", &ea::ToyArchitecture::stages);

  py::class_<ea::ToyClassifier>(m, "ToyClassifier")
      .def_property_readonly("input_dim", &ea::ToyClassifier::input_dim)
      .def_property_readonly("num_classes", &ea::ToyClassifier::num_classes)
      .def_property_readonly("layers", [](const ea::ToyClassifier& c) { return c.layers.size(); })
      .def("predict", [](const ea::ToyClassifier& c, const ea::Dataset& d) {
        return to_numpy(ea::classifier_forward(c, d.x));
      });

  m.def("pretrain_toy", &ea::pretrain_toy, py::arg("data"), py::arg("arch"), py::arg("epochs"),
        py::arg("lr"), py::arg("seed"), py::arg("batch_size") = 32);
  m.def("classifier_accuracy", &ea::classifier_accuracy);
  m.def("elasticize", &elasticize, py::arg("model"), py::arg("gamma") = 1.0,
        py::arg("max_merge") = 2, py::arg("shrink_rates") = std::vector<double>{0.5, 0.25},
        "Partition the model and add merged and shrunk variants");

  py::class_<ea::SupernetWeights>(m, "SupernetWeights")
      .def("block_count", [](const ea::SupernetWeights& w) { return w.blocks.size(); })
      .def(
          "subnet_logits",
          [](const ea::SupernetWeights& w, const ea::SubnetEncoding& e, const ea::Dataset& d) {
            return to_numpy(ea::subnet_forward(w, e, d.x).logits);
          },
          py::arg("subnet"), py::arg("data"));
  m.def("init_supernet_weights", &ea::init_supernet_weights, py::arg("pretrained"),
        py::arg("graph"), py::arg("seed"), py::arg("init_scale") = 0.05);
  m.def("frozen_params_hash", &ea::frozen_params_hash);

  // ---- training
  py::class_<ea::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("distill_epochs", &ea::TrainConfig::distill_epochs)
      .def_readwrite("tune_epochs", &ea::TrainConfig::tune_epochs)
      .def_readwrite("lr_distill", &ea::TrainConfig::lr_distill)
      .def_readwrite("lr_tune", &ea::TrainConfig::lr_tune)
      .def_readwrite("batch_size", &ea::TrainConfig::batch_size)
      .def_readwrite("eval_subnet_samples", &ea::TrainConfig::eval_subnet_samples)
      .def_readwrite("seed", &ea::TrainConfig::seed)
      .def("validate", &ea::TrainConfig::validate);

  m.def(
      "train_supernet",
      [](const ea::SupernetWeights& initial, const ea::SupernetGraph& graph,
         const ea::TrainConfig& config, const ea::Dataset& train, const ea::Dataset& val,
         const ea::LatencyTable& table) {
        ea::TrainResult r = ea::train_supernet(initial, graph, config, train, val, table);
        return py::make_tuple(std::move(r.weights), report_dict(r.report));
      },
      py::arg("initial"), py::arg("graph"), py::arg("config"), py::arg("train"), py::arg("val"),
      py::arg("table"), "Distill then tune; returns (weights, report)");

  // ---- latency
  py::class_<ea::LatencyTable>(m, "LatencyTable")
      .def_readonly("device_id", &ea::LatencyTable::device_id)
      .def("at", &ea::LatencyTable::at)
      .def("entries", [](const ea::LatencyTable& t) {
        py::dict d;
        for (const auto& [k, v] : t.entries) d[py::str(k.str())] = v;
        return d;
      });
  py::class_<ea::EnvProfile>(m, "EnvProfile")
      .def_readonly("device_id", &ea::EnvProfile::device_id)
      .def_readonly("noise_fraction", &ea::EnvProfile::noise_fraction)
      .def("scale_at", &ea::EnvProfile::scale_at);

  m.def("device_presets", [] {
    std::vector<std::string> names;
    for (const auto& p : ea::device_presets()) names.push_back(p.name);
    return names;
  });
  m.def(
      "make_env",
      [](const ea::SupernetGraph& g, const std::string& preset, std::optional<double> noise,
         const std::string& scenario, double event_ms, double recover_ms) {
        const double n = noise.value_or(ea::find_device_preset(preset).default_noise);
        return ea::make_env(g, preset, n, ea::scenario_timeline(scenario, event_ms, recover_ms));
      },
      py::arg("graph"), py::arg("preset") = "ideal", py::arg("noise") = py::none(),
      py::arg("scenario") = "flat", py::arg("event_ms") = 2000.0, py::arg("recover_ms") = 4000.0);
  m.def("nominal_table", &ea::nominal_table);
  m.def(
      "profile_blocks",
      [](const ea::SupernetGraph& g, const ea::EnvProfile& env, int runs, uint64_t seed) {
        return ea::profile_blocks(g, env, runs, seed).table;
      },
      py::arg("graph"), py::arg("env"), py::arg("runs") = 99, py::arg("seed") = 0);
  m.def("subnet_latency", &ea::subnet_latency);
  m.def("simulate_inference", &ea::simulate_inference, py::arg("subnet"), py::arg("env"),
        py::arg("wall_time_ms"), py::arg("seed"));

  // ---- evaluation and search
  py::class_<ea::GroupEvaluator>(m, "GroupEvaluator")
      .def(py::init<const ea::SupernetWeights&, const ea::Dataset&, const ea::LatencyTable&, size_t>(),
           py::arg("weights"), py::arg("data"), py::arg("table"), py::arg("depth_cap") = 4,
           py::keep_alive<1, 2>(), py::keep_alive<1, 3>(), py::keep_alive<1, 4>())
      .def("__call__", &ea::GroupEvaluator::operator())
      .def_property_readonly("candidates_evaluated", &ea::GroupEvaluator::candidates_evaluated)
      .def_property_readonly("block_forwards", &ea::GroupEvaluator::block_forwards)
      .def_property_readonly("naive_forwards", &ea::GroupEvaluator::naive_forwards);

  py::class_<ea::EvalReport>(m, "EvalReport")
      .def_readonly("accuracy", &ea::EvalReport::accuracy)
      .def_readonly("block_forward_count", &ea::EvalReport::block_forward_count)
      .def_readonly("naive_forward_count", &ea::EvalReport::naive_forward_count)
      .def_readonly("peak_cached_features", &ea::EvalReport::peak_cached_features);
  m.def("group_evaluate", &ea::group_evaluate, py::arg("candidates"), py::arg("data"),
        py::arg("weights"), py::arg("table"), py::arg("depth_cap"), py::arg("batch_size") = 256);

  py::class_<ea::SearchConfig>(m, "SearchConfig")
      .def(py::init<>())
      .def_readwrite("budget_ms", &ea::SearchConfig::budget_ms)
      .def_readwrite("delta_ms", &ea::SearchConfig::delta_ms)
      .def_readwrite("population", &ea::SearchConfig::population)
      .def_readwrite("search_times", &ea::SearchConfig::search_times)
      .def_readwrite("seed", &ea::SearchConfig::seed)
      .def_readwrite("keep_fraction", &ea::SearchConfig::keep_fraction)
      .def_readwrite("max_evaluations", &ea::SearchConfig::max_evaluations)
      .def_readwrite("initial_temperature", &ea::SearchConfig::initial_temperature)
      .def_readwrite("cooling", &ea::SearchConfig::cooling);

  py::class_<ea::HistoryRow>(m, "HistoryRow")
      .def_readonly("generation", &ea::HistoryRow::generation)
      .def_readonly("subnet", &ea::HistoryRow::enc)
      .def_readonly("latency", &ea::HistoryRow::latency)
      .def_readonly("accuracy", &ea::HistoryRow::accuracy);

  py::class_<ea::SearchResult>(m, "SearchResult")
      .def_readonly("found", &ea::SearchResult::found)
      .def_readonly("evaluations", &ea::SearchResult::evaluations)
      .def_readonly("history", &ea::SearchResult::history)
      .def_property_readonly("best", [](const ea::SearchResult& r) { return r.best.enc; })
      .def_property_readonly("best_latency", [](const ea::SearchResult& r) { return r.best.latency; })
      .def_property_readonly("best_accuracy", [](const ea::SearchResult& r) { return r.best.accuracy; });

  m.def("evolutionary_search", &ea::evolutionary_search, py::arg("graph"), py::arg("table"),
        py::arg("config"), py::arg("evaluator"));
  m.def("plain_evolutionary", &ea::plain_evolutionary, py::arg("graph"), py::arg("table"),
        py::arg("config"), py::arg("evaluator"));
  m.def("simulated_annealing", &ea::simulated_annealing, py::arg("graph"), py::arg("table"),
        py::arg("config"), py::arg("evaluator"));
  m.def("exhaustive_oracle", &ea::exhaustive_oracle, py::arg("graph"), py::arg("table"),
        py::arg("budget_ms"), py::arg("evaluator"), py::arg("cap") = 10000);

  // ---- runtime
  py::class_<ea::PoolEntry>(m, "PoolEntry")
      .def_readonly("subnet", &ea::PoolEntry::enc)
      .def_readonly("latency", &ea::PoolEntry::latency)
      .def_readonly("accuracy", &ea::PoolEntry::accuracy);
  py::class_<ea::SubnetPool>(m, "SubnetPool")
      .def_readonly("entries", &ea::SubnetPool::entries)
      .def_readonly("budget_ms", &ea::SubnetPool::budget_ms)
      .def_property_readonly("optimal", [](const ea::SubnetPool& p) { return p.optimal_entry(); });
  m.def(
      "build_pool",
      [](const std::vector<ea::HistoryRow>& history, double budget_ms, double delta_ms, size_t levels) {
        return ea::build_pool(history, ea::LatencyWindow::around(budget_ms, delta_ms), budget_ms, levels);
      },
      py::arg("history"), py::arg("budget_ms"), py::arg("delta_ms"), py::arg("levels") = 10);

  m.def(
      "serve",
      [](const ea::SupernetWeights& weights, const ea::SupernetGraph& graph,
         const ea::LatencyTable& table, const ea::SubnetPool& pool, const ea::EnvProfile& env,
         double budget_ms, double duration_ms, double interval_ms, uint64_t seed,
         std::optional<ea::Evaluator> evaluator) {
        ea::MemoryWeightStore store(weights);
        ea::ServingModel model(store, graph, pool.optimal_entry().enc);
        ea::ServeConfig cfg;
        cfg.budget_ms = budget_ms;
        cfg.duration_ms = duration_ms;
        cfg.request_interval_ms = interval_ms;
        cfg.seed = seed;
        cfg.pool_levels = pool.levels;
        ea::Evaluator ev = evaluator ? *evaluator : ea::Evaluator([](const auto&) -> std::vector<double> {
          throw ea::Error("re-search needs an evaluator");
        });
        ea::ServeLog log = ea::serve_loop(env, pool, model, graph, table, cfg, ev);
        py::list events;
        for (const auto& e : log.events) {
          events.append(py::dict(py::arg("t_ms") = e.t_ms, py::arg("observed_ms") = e.observed_ms,
                                 py::arg("r") = e.r, py::arg("action") = e.action,
                                 py::arg("arch") = e.arch, py::arg("projected_ms") = e.projected_ms));
        }
        return py::dict(py::arg("events") = events, py::arg("swaps") = log.swaps,
                        py::arg("researches") = log.researches,
                        py::arg("active") = model.active(), py::arg("final_pool") = log.final_pool);
      },
      py::arg("weights"), py::arg("graph"), py::arg("table"), py::arg("pool"), py::arg("env"),
      py::arg("budget_ms"), py::arg("duration_ms") = 6000.0, py::arg("interval_ms") = 100.0,
      py::arg("seed") = 0, py::arg("evaluator") = py::none(),
      "Run the monitor loop against a simulated device; returns a log dict");

  // ---- persistence
  m.def(
      "save_bundle",
      [](const std::filesystem::path& dir, const ea::SupernetGraph& g, const ea::SupernetWeights& w) {
        ea::save_bundle(dir, {g, w, nlohmann::json::object()});
      },
      py::arg("dir"), py::arg("graph"), py::arg("weights"));
  m.def(
      "load_bundle",
      [](const std::filesystem::path& dir) {
        ea::SupernetBundle b = ea::load_bundle(dir);
        return py::make_tuple(std::move(b.graph), std::move(b.weights));
      },
      py::arg("dir"), "Returns (graph, weights)");
  m.def("save_table", &ea::save_table);
  m.def("load_table", &ea::load_table);
  m.def(
      "save_dataset",
      [](const std::filesystem::path& p, const ea::Dataset& d) { ea::save_dataset(p, d); });
  m.def("load_dataset", [](const std::filesystem::path& p) { return ea::load_dataset(p); });
}
