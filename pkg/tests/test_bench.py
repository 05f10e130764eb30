import csv
import json

import numpy as np
import pytest
from scipy import stats

from graphbo.bench import (ExperimentConfig, GraphSpec, MethodSpec, ObjectiveSpec, Problem,
                           aggregate, aggregate_and_export, build_problem, initial_omega_size,
                           mean_ci, run, run_baseline, run_graph_bo, traversal_order)
from graphbo.bench.runner import IterationRecord, RegretTrace
from graphbo.errors import GraphBOError, InputError
from graphbo.graph_core import Graph, NodeSignal


def path_graph(n):
    A = np.zeros((n, n))
    i = np.arange(n - 1)
    A[i, i + 1] = A[i + 1, i] = 1.0
    return Graph(A)


def small_cfg(name="ours", n=40, T=5, N0=3, **method):
    method.setdefault("init_epochs", 50)
    method.setdefault("d1", 4)
    method.setdefault("d2", 3)
    return ExperimentConfig(graph=GraphSpec(n=n, blocks=[n // 2, n - n // 2]),
                            objective=ObjectiveSpec(k=3), T=T, N0=N0,
                            method=MethodSpec(name=name, **method))


def synthetic_trace(method, seed, regrets):
    tr = RegretTrace(method, seed, optimum=1.0)
    for t, r in enumerate(regrets):
        tr.records.append(IterationRecord(t, t, 1.0 - r, 1.0 - r, r, 0.0))
    return tr


def check_trace_invariants(tr, cfg):
    best = np.array([r.best for r in tr.records])
    assert np.all(np.diff(best) >= 0)
    assert np.all(tr.regrets >= 0) and np.all(np.diff(tr.regrets) <= 0)
    assert len(tr.queried) == cfg.N0 + cfg.T
    assert len(set(tr.queried)) == len(tr.queried)


# config

def test_config_roundtrip_and_validation(tmp_path):
    cfg = small_cfg()
    cfg.dump(tmp_path / "c.json")
    back = ExperimentConfig.load(tmp_path / "c.json")
    assert back.to_dict() == cfg.to_dict()
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"graph": {"n": 10}, "T": 20})
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"bogus": 1})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(InputError):
        ExperimentConfig.load(tmp_path / "bad.json")


def test_paper_defaults_kept_in_train_config():
    from graphbo.completion import TrainConfig
    tc = TrainConfig()
    assert (tc.tau, tc.mu2, tc.muQ, tc.muF) == (0.5, 0.5, 0.1, 0.1)
    assert tc.batch_sizes == (128, 256, 256)
    assert tc.learning_rates == (1e-3, 5e-4, 1e-3)
    m = MethodSpec()
    assert m.gp_lr == 1e-2
    cfg = ExperimentConfig()
    assert (cfg.N0, cfg.T) == (10, 200)


def test_initial_omega_size_rule():
    assert initial_omega_size(500, 20) == int(np.floor(0.1 * 500 * 499 / 2))
    assert initial_omega_size(10_000, 1, rho0=0.01) == int(np.ceil(0.01 * 10_000 * np.log(10_000) ** 2))
    assert initial_omega_size(2, 1) == 1


# runs

def test_graph_bo_exhausts_two_nodes():
    cfg = ExperimentConfig(graph=GraphSpec(n=2, blocks=[2], p_in=1.0), objective=ObjectiveSpec(k=2),
                           T=1, N0=1, method=MethodSpec(d1=1, d2=1, init_epochs=5))
    tr = run_graph_bo(cfg, 0)
    assert tr.error is None
    assert sorted(tr.queried) == [0, 1]
    assert tr.final_regret == 0


def test_graph_bo_small_run_is_deterministic():
    cfg = small_cfg(T=4)
    a, b = run_graph_bo(cfg, 3), run_graph_bo(cfg, 3)
    assert a.error is None
    check_trace_invariants(a, cfg)
    assert [r.node for r in a.records] == [r.node for r in b.records]
    assert np.array_equal(a.regrets, b.regrets)
    assert a.edge_queries == b.edge_queries


def test_graph_bo_edge_accounting():
    cfg = small_cfg(T=3)
    problem = build_problem(cfg, 0)
    tr = run_graph_bo(cfg, 0, problem)
    omega0 = initial_omega_size(40, 4)
    deg0 = 2 * omega0 / 40
    assert tr.edge_queries == omega0 + 3 * int(np.ceil(2 * deg0))


def test_graph_bo_records_errors_instead_of_raising():
    cfg = small_cfg(T=3, kernel="rbf", kernel_params={"sigma_f": -1.0}, gp_steps=0)
    tr = run_graph_bo(cfg, 0)
    assert tr.error is not None and "ParameterError" in tr.error
    assert len(tr.records) == 1


def test_random_baseline_exhausts_small_graph():
    cfg = ExperimentConfig(graph=GraphSpec(n=10, blocks=[5, 5]), objective=ObjectiveSpec(k=3),
                           T=9, N0=1, method=MethodSpec(name="random"))
    tr = run_baseline(cfg, 0)
    assert sorted(tr.queried) == list(range(10))
    assert tr.final_regret == 0


def test_bfs_on_path_and_dfs_order():
    g = path_graph(6)
    assert traversal_order(g, 0, "bfs") == [0, 1, 2, 3, 4, 5]
    assert traversal_order(g, 2, "bfs") == [2, 1, 3, 0, 4, 5]
    assert traversal_order(g, 2, "dfs") == [2, 1, 0, 3, 4, 5]


def test_local_search_climbs_monotone_path():
    n = 12
    g = path_graph(n)
    y = -np.abs(np.arange(n) - 9.0)
    cfg = ExperimentConfig(graph=GraphSpec(n=n, blocks=[n]), objective=ObjectiveSpec(k=2),
                           T=11, N0=1, method=MethodSpec(name="local"))
    problem = Problem(g, NodeSignal(y), np.array([0]))
    tr = run_baseline(cfg, 0, problem)
    diameter = n - 1
    hit = next(r.t for r in tr.records if r.regret == 0)
    assert hit <= diameter
    assert [r.node for r in tr.records[1:4]] == [1, 2, 3]


def test_baselines_share_problem_and_satisfy_invariants():
    cfg = small_cfg(T=10)
    problem = build_problem(cfg, 5)
    for name in ("random", "local", "bfs", "dfs"):
        c = ExperimentConfig(graph=cfg.graph, objective=cfg.objective, T=10, N0=3,
                             method=MethodSpec(name=name))
        tr = run(c, 5, problem)
        assert tr.init_nodes == problem.init_nodes.tolist()
        check_trace_invariants(tr, c)
    assert np.array_equal(build_problem(cfg, 5).graph.A, problem.graph.A)
    with pytest.raises(InputError):
        run_baseline(ExperimentConfig(method=MethodSpec(name="nope")), 0)


# aggregation and export

def test_aggregate_one_and_identical_traces():
    one = aggregate([synthetic_trace("ours", 0, [0.5, 0.2, 0.1])])
    it, mean, lo, hi, runs = one["ours"]
    assert np.array_equal(lo, mean) and np.array_equal(hi, mean)
    same = aggregate([synthetic_trace("r", s, [0.4, 0.3, 0.0]) for s in range(10)])
    _, mean, lo, hi, runs = same["r"]
    assert np.allclose(mean, [0.4, 0.3, 0.0]) and np.allclose(hi - lo, 0)
    assert runs.tolist() == [10, 10, 10]


def test_aggregate_matches_direct_formula():
    rng = np.random.default_rng(0)
    R = np.sort(rng.uniform(0, 1, (10, 6)), axis=1)[:, ::-1]
    traces = [synthetic_trace("m", s, R[s]) for s in range(10)]
    _, mean, lo, hi, _ = aggregate(traces)["m"]
    m = R.sum(axis=0) / 10
    sd = np.sqrt(((R - m) ** 2).sum(axis=0) / 9)
    half = stats.t.ppf(0.975, 9) * sd / np.sqrt(10)
    assert np.abs(mean - m).max() <= 1e-12
    assert np.abs(lo - (m - half)).max() <= 1e-12
    assert np.abs(hi - (m + half)).max() <= 1e-12
    assert mean_ci([2.0]) == (2.0, 0.0)


def test_export_writes_all_files(tmp_path):
    traces = [synthetic_trace("ours", s, [0.5, 0.25, 0.0]) for s in range(3)]
    traces.append(synthetic_trace("random", 0, [0.5, 0.5, 0.4]))
    paths = aggregate_and_export(traces, tmp_path, title="test")
    for key in ("aggregate", "summary", "timings", "plot"):
        assert paths[key].exists()
    with open(paths["aggregate"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and rows[0]["method"] == "ours" and rows[0]["runs"] == "3"
    with open(tmp_path / "trace_ours_seed1.csv") as fh:
        first = next(csv.DictReader(fh))
    assert set(first) == {"iteration", "method", "seed", "node", "y", "best", "regret"}
    assert paths["plot"].read_text().lstrip().startswith("<?xml")


def test_export_reports_io_failures(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(GraphBOError, match=str(blocker)):
        aggregate_and_export([synthetic_trace("ours", 0, [0.1])], blocker / "sub")
    with pytest.raises(GraphBOError):
        aggregate_and_export([], tmp_path)


def test_export_is_deterministic(tmp_path):
    traces = [synthetic_trace("ours", s, [0.3, 0.1]) for s in range(2)]
    aggregate_and_export(traces, tmp_path / "a")
    aggregate_and_export(traces, tmp_path / "b")
    for name in ("aggregate.csv", "summary.csv", "trace_ours_seed0.csv", "regret.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
