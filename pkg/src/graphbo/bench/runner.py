"""End-to-end runs: graph BO with a learned surrogate, and the baselines."""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..acquisition import select_next
from ..completion import SpectralSurrogate, SurrogateTrainer
from ..embedding import extract_eigenpairs
from ..errors import GraphBOError, InputError
from ..gp import GPSurrogate, SpectralKernel, fit_hyperparams
from ..graph_core import (Graph, NodeSignal, ObservationSet, bandlimited_signal,
                          load_edge_list, pagerank, power_law_generate, rdpg_generate,
                          sbm_generate)
from ..sampling import SamplerConfig, balanced_edge_sample, uniform_edge_sample
from .config import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationRecord:
    t: int
    node: int
    y: float
    best: float
    regret: float
    wall_time: float


@dataclass
class RegretTrace:
    """Best-so-far and simple regret after the initial design (t=0) and each query."""

    method: str
    seed: int
    optimum: float
    init_nodes: list = field(default_factory=list)
    records: list = field(default_factory=list)
    edge_queries: int = 0
    error: str | None = None

    @property
    def regrets(self) -> np.ndarray:
        return np.array([r.regret for r in self.records])

    @property
    def queried(self) -> list:
        return self.init_nodes + [r.node for r in self.records if r.t > 0]

    @property
    def final_regret(self) -> float:
        return self.records[-1].regret

    def best_node(self, y) -> int:
        q = np.asarray(self.queried)
        return int(q[np.argmax(y[q])])

    def _log(self, t, node, y, best, t0):
        self.records.append(IterationRecord(t, int(node), float(y), float(best),
                                            float(self.optimum - best),
                                            time.perf_counter() - t0))


@dataclass(frozen=True)
class Problem:
    graph: Graph
    signal: NodeSignal
    init_nodes: np.ndarray


def _streams(seed):
    """Independent seed sequences: the shared problem (graph, signal, initial
    nodes) and the method's own randomness."""
    problem, method = np.random.SeedSequence(seed).spawn(2)
    return problem.spawn(3), method


def build_graph(spec, rng) -> Graph:
    if spec.type == "sbm":
        return sbm_generate(spec.n, spec.blocks, spec.p_in, spec.p_out, rng)
    if spec.type == "rdpg":
        return rdpg_generate(spec.n, spec.latent_dim, rng)
    if spec.type == "power_law":
        return power_law_generate(spec.n, spec.attachment, rng)
    return load_edge_list(spec.path, n_hint=spec.n)


def build_problem(cfg: ExperimentConfig, seed: int) -> Problem:
    """Graph, objective and initial nodes for one seed.

    These depend only on the seed and the graph/objective specs, so every
    method in an experiment sees the same problem.
    """
    (g_ss, y_ss, i_ss), _ = _streams(seed)
    graph = build_graph(cfg.graph, np.random.default_rng(g_ss))
    if cfg.objective.kind == "bandlimited":
        signal = bandlimited_signal(graph, cfg.objective.k, np.random.default_rng(y_ss))
    else:
        signal = pagerank(graph, damping=cfg.objective.damping)
    if cfg.N0 + cfg.T > graph.n:
        raise InputError(f"N0 + T = {cfg.N0 + cfg.T} exceeds n = {graph.n}")
    init = np.random.default_rng(i_ss).choice(graph.n, size=cfg.N0, replace=False)
    return Problem(graph, signal, np.sort(init))


def initial_omega_size(n, d1, rho0=None, cap=0.1) -> int:
    """``ceil(rho0 * n * ln(n)^2)`` with ``rho0 = 2 d1``, capped at ``cap`` of all pairs.

    At least one pair is observed so the first training round has data.
    """
    rho0 = 2.0 * d1 if rho0 is None else rho0
    total = n * (n - 1) // 2
    size = min(math.ceil(rho0 * n * math.log(n) ** 2), math.floor(cap * total))
    return int(min(max(size, 1), total))


def _start(cfg, problem, seed, method):
    trace = RegretTrace(method, seed, problem.signal.argmax_value)
    y = problem.signal.y
    trace.init_nodes = [int(v) for v in problem.init_nodes]
    return trace, y, time.perf_counter()


def run_graph_bo(cfg: ExperimentConfig, seed: int, problem: Problem | None = None) -> RegretTrace:
    """Algorithm 1: alternate surrogate training, GP-EI node selection and
    edge sampling for ``cfg.T`` iterations.

    Any library error stops the loop; the trace keeps what was done and
    records the message in ``error``.
    """
    m = cfg.method
    problem = problem or build_problem(cfg, seed)
    graph, n = problem.graph, problem.graph.n
    trace, y, t0 = _start(cfg, problem, seed, "ours")
    queried = list(trace.init_nodes)
    trace._log(0, -1, np.nan, y[queried].max(), t0)
    _, method_ss = _streams(seed)
    omega_ss, train_ss, surr_ss, edge_ss = method_ss.spawn(4)
    edge_rng = np.random.default_rng(edge_ss)

    size0 = initial_omega_size(n, m.d1, m.rho0, m.omega_cap)
    obs = uniform_edge_sample(ObservationSet(n), graph, size0, np.random.default_rng(omega_ss))
    trace.edge_queries = len(obs)
    budget = m.sampler.budget
    if budget is None:
        budget = math.ceil(2.0 * obs.degrees().mean())
    logger.info("seed %d: |Omega0|=%d, per-iteration edge budget Q=%d", seed, size0, budget)

    train = m.train
    train_seed = int(np.random.default_rng(train_ss).integers(2**31))
    train = type(train)(**{**train.__dict__, "rng_seed": train_seed})
    surrogate = SpectralSurrogate.create(n, m.d1, m.d2, hidden=m.hidden,
                                         rng_seed=np.random.default_rng(surr_ss))
    trainer = SurrogateTrainer(surrogate, train)
    kernel_params = dict(m.kernel_params or {})
    noise = 0.0 if m.noiseless else m.noise_var
    try:
        trainer.train_round(obs, m.init_epochs)
        for t in range(1, cfg.T + 1):
            trainer.train_round(obs)
            eig = extract_eigenpairs(trainer.surrogate.f_model, trainer.surrogate)
            kernel = SpectralKernel(m.kernel, dict(kernel_params), eig)
            gp = GPSurrogate(kernel, queried, y[queried], noise_var=noise,
                             learn_noise=not m.noiseless)
            if m.gp_steps and len(queried) >= 2:
                gp = fit_hyperparams(gp, lr=m.gp_lr, steps=m.gp_steps)
            kernel_params = dict(gp.kernel.params)
            if not m.noiseless:
                noise = gp.noise_var
            v = select_next(gp, n, queried, convention=m.ei_convention).chosen
            queried.append(v)
            trace._log(t, v, y[v], max(trace.records[-1].best, y[v]), t0)
            if budget > 0 and len(obs) < n * (n - 1) // 2:
                before = len(obs)
                if m.sampler.kind == "balanced":
                    scfg = SamplerConfig(budget, m.sampler.balance_fraction,
                                         m.sampler.explore_prob, deficit=m.sampler.deficit)
                    best = trace.best_node(y)
                    obs = balanced_edge_sample(obs, graph, v, best, scfg, rng=edge_rng)
                else:
                    obs = uniform_edge_sample(obs, graph, budget, edge_rng)
                trace.edge_queries += len(obs) - before
    except GraphBOError as exc:
        logger.error("seed %d: run stopped at iteration %d: %s", seed, len(trace.records), exc)
        trace.error = f"{type(exc).__name__}: {exc}"
    return trace


def traversal_order(graph: Graph, start: int, kind: str) -> list:
    """Nodes reachable from ``start`` in BFS or DFS visitation order.

    Neighbors are expanded in ascending index order.
    """
    if kind == "bfs":
        seen, order, frontier = {start}, [], deque([start])
        while frontier:
            u = frontier.popleft()
            order.append(u)
            for w in graph.neighbors(u):
                if int(w) not in seen:
                    seen.add(int(w))
                    frontier.append(int(w))
        return order
    seen, order, stack = set(), [], [start]
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        order.append(u)
        stack.extend(int(w) for w in graph.neighbors(u)[::-1] if int(w) not in seen)
    return order


def run_baseline(cfg: ExperimentConfig, seed: int, problem: Problem | None = None) -> RegretTrace:
    """Random, local hill-climbing, BFS or DFS under the same query budget.

    ``local`` queries the unqueried neighbors of its current node in index
    order and moves on the first improvement; when they run out it restarts
    at a random unqueried node. ``bfs``/``dfs`` query in visitation order
    from a random start and restart once that component is exhausted.
    Traversal baselines read true-graph neighbors for free; only node-value
    queries are counted.
    """
    kind = cfg.method.name
    if kind not in ("random", "local", "bfs", "dfs"):
        raise InputError(f"unknown baseline {kind!r}")
    problem = problem or build_problem(cfg, seed)
    graph, n = problem.graph, problem.graph.n
    trace, y, t0 = _start(cfg, problem, seed, kind)
    queried = set(trace.init_nodes)
    trace._log(0, -1, np.nan, max(y[v] for v in queried), t0)
    rng = np.random.default_rng(_streams(seed)[1].spawn(1)[0])
    current = trace.best_node(y)
    plan = deque()

    def random_unqueried():
        pool = np.setdiff1d(np.arange(n), np.fromiter(queried, dtype=np.int64))
        return int(pool[rng.integers(pool.size)])

    for t in range(1, cfg.T + 1):
        if kind == "random":
            v = random_unqueried()
        elif kind == "local":
            nbrs = [int(w) for w in graph.neighbors(current) if int(w) not in queried]
            if nbrs:
                v = nbrs[0]
                if y[v] > y[current]:
                    current = v
            else:
                v = current = random_unqueried()
        else:
            while plan and plan[0] in queried:
                plan.popleft()
            if not plan:
                plan = deque(u for u in traversal_order(graph, random_unqueried(), kind)
                             if u not in queried)
            v = plan.popleft()
        queried.add(v)
        trace._log(t, v, y[v], max(trace.records[-1].best, y[v]), t0)
    return trace


def run(cfg: ExperimentConfig, seed: int, problem: Problem | None = None) -> RegretTrace:
    if cfg.method.name == "ours":
        return run_graph_bo(cfg, seed, problem)
    return run_baseline(cfg, seed, problem)
