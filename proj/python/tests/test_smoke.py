# Copyright 2026 The edgeadapt Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import numpy as np
import pytest

import edgeadapt as ea


@pytest.fixture(scope="module")
def toy():
    data = ea.make_blobs(4, 6, 60, 4.0, 1)
    train, val = ea.split_dataset(data, 0.25, 2)
    model = ea.pretrain_toy(train, ea.ToyArchitecture.uniform(4, 8, 12), 20, 0.02, 3)
    graph = ea.elasticize(model)
    weights = ea.init_supernet_weights(model, graph, 4)
    table = ea.nominal_table(ea.make_env(graph, "ideal"))
    return dict(train=train, val=val, model=model, graph=graph, weights=weights, table=table)


def test_graph_counts(toy):
    graph = toy["graph"]
    assert graph.size == 4
    assert ea.count_subnets(graph) == 115
    subnets = ea.enumerate_subnets(graph)
    assert len(subnets) == 115
    assert len({s.arch() for s in subnets}) == 115
    assert ea.validate_subnet(graph, ea.SubnetEncoding.parse("0:0,1:0,3:0")) == "gap at 2"
    assert ea.validate_subnet(graph, ea.all_original_subnet(graph)) is None


def test_dataset_roundtrip(tmp_path, toy):
    val = toy["val"]
    assert val.x.shape == (len(val), 6)
    path = tmp_path / "d.csv"
    ea.save_dataset(path, val)
    back = ea.load_dataset(path)
    assert np.array_equal(back.x, val.x)
    assert back.labels == val.labels
    custom = ea.Dataset(np.zeros((3, 2)), [0, 1, 1], 2)
    assert len(custom) == 3
    with pytest.raises(RuntimeError):
        ea.Dataset(np.zeros((3, 2)), [0, 5, 1], 2)


def test_latency_is_additive(toy):
    graph, table = toy["graph"], toy["table"]
    entries = table.entries()
    for seed in range(20):
        s = ea.sample_uniform_subnet(graph, seed)
        assert ea.subnet_latency(table, s) == pytest.approx(sum(entries[str(k)] for k in s.choices()))


def test_train_search_serve(tmp_path, toy):
    cfg = ea.TrainConfig()
    cfg.distill_epochs = 2
    cfg.tune_epochs = 2
    cfg.eval_subnet_samples = 8
    weights, report = ea.train_supernet(toy["weights"], toy["graph"], cfg, toy["train"], toy["val"], toy["table"])
    assert report["frozen_hash_before"] == report["frozen_hash_after"]
    assert len(report["epochs"]) == 4

    graph, table = toy["graph"], toy["table"]
    evaluator = ea.GroupEvaluator(weights, toy["val"], table, 4)
    budget = 0.9 * ea.subnet_latency(table, ea.all_original_subnet(graph))
    sc = ea.SearchConfig()
    sc.budget_ms = budget
    sc.delta_ms = 0.7 * budget
    sc.population = 20
    sc.search_times = 5
    result = ea.evolutionary_search(graph, table, sc, evaluator)
    oracle = ea.exhaustive_oracle(graph, table, budget, evaluator)
    assert result.found and result.best_latency <= budget
    assert result.best_accuracy <= oracle.best_accuracy
    assert evaluator.block_forwards <= evaluator.naive_forwards

    # Python callables work as evaluators too.
    calls = []

    def by_latency(cands):
        calls.append(len(cands))
        return [ea.subnet_latency(table, c) for c in cands]

    assert ea.exhaustive_oracle(graph, table, budget, by_latency).found
    assert sum(calls) > 0

    pool = ea.build_pool(result.history, budget, sc.delta_ms)
    env = ea.make_env(graph, "ideal", 0.0, "flat")
    log = ea.serve(weights, graph, table, pool, env, budget, duration_ms=1000)
    assert log["swaps"] == 0
    assert len(log["events"]) == 11

    ea.save_bundle(tmp_path / "b", graph, weights)
    g2, w2 = ea.load_bundle(tmp_path / "b")
    assert ea.count_subnets(g2) == 115
    s = ea.all_original_subnet(graph)
    assert np.array_equal(w2.subnet_logits(s, toy["val"]), weights.subnet_logits(s, toy["val"]))


def test_errors(tmp_path):
    with pytest.raises(ea.Error, match="malformed arch"):
        ea.SubnetEncoding.parse("0:x")
    bad = tmp_path / "t.txt"
    bad.write_text("nope\n")
    with pytest.raises(ea.ParseError, match=":1"):
        ea.load_table(bad)
