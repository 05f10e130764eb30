"""Edge sampling strategies and observation-pattern statistics."""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from .completion import SpectralSurrogate, SurrogateTrainer, TrainConfig, relative_offdiag_error
from .errors import InputError
from .graph_core import Graph, ObservationSet, graph_from_latent, rdpg_latent

logger = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    edge_budget: int
    balance_fraction: float = 0.5
    explore_prob: float = 0.5
    rng_seed: int | None = None
    deficit: str = "absolute"

    def __post_init__(self):
        if self.edge_budget < 1:
            raise InputError("edge_budget must be at least 1")
        if not 0.0 < self.balance_fraction < 1.0:
            raise InputError("balance_fraction must lie in (0, 1)")
        if not 0.0 < self.explore_prob < 1.0:
            raise InputError("explore_prob must lie in (0, 1)")
        if self.deficit not in ("absolute", "signed"):
            raise InputError("deficit must be 'absolute' or 'signed'")


@dataclass
class BalancedSampleInfo:
    """What one call of :func:`balanced_edge_sample` did."""

    seed_edges: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    uniform_edges: int = 0
    diverted: int = 0


def _total_pairs(n):
    return n * (n - 1) // 2


def sample_unobserved(mask, count, rng, exclude=None):
    """``count`` distinct pairs ``(i, j)``, ``i < j``, with ``mask[i, j]`` False.

    ``mask`` is an upper-triangular observation mask (modified in place to
    include the drawn pairs). Dense enumeration is used once the free pool is
    small; otherwise rejection sampling keeps memory linear in ``count``.
    """
    n = mask.shape[0]
    if count <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    observed = int(np.count_nonzero(mask))
    free = _total_pairs(n) - observed
    if count > free:
        raise InputError(f"requested {count} pairs but only {free} are unobserved")
    if free < 4 * count or free < _total_pairs(n) // 2:
        pool = np.argwhere(np.triu(~mask, 1))
        pick = pool[np.sort(rng.choice(len(pool), size=count, replace=False))]
        mask[pick[:, 0], pick[:, 1]] = True
        return pick
    out = []
    while len(out) < count:
        need = count - len(out)
        i = rng.integers(0, n, size=2 * need + 8)
        j = rng.integers(0, n, size=2 * need + 8)
        for a, b in zip(np.minimum(i, j), np.maximum(i, j)):
            if a != b and not mask[a, b]:
                mask[a, b] = True
                out.append((a, b))
                if len(out) == count:
                    break
    return np.array(out, dtype=np.int64)


def _upper_mask(obs: ObservationSet):
    mask = np.zeros((obs.n, obs.n), dtype=bool)
    mask[obs.rows, obs.cols] = True
    return mask


def balanced_edge_sample(obs: ObservationSet, graph: Graph, queried_node: int, best_node: int,
                         cfg: SamplerConfig, rng=None, degrees=None, info=None):
    """Seed expansion around the queried/best node, then uniform re-balancing.

    Phase A adds ``ceil(beta * Q)`` edges, each joining a seed (the queried
    node with probability ``explore_prob``, else the best node) to the
    unobserved partner with the largest degree deficit. Phase B draws the
    remaining budget uniformly from all still-unobserved pairs. When a seed
    has no unobserved partner left, the rest of phase A's budget moves to
    phase B. Returns the enlarged observation set.
    """
    rng = np.random.default_rng(cfg.rng_seed if rng is None else rng)
    info = info if info is not None else BalancedSampleInfo()
    n = obs.n
    mask = _upper_mask(obs)
    remaining = _total_pairs(n) - len(obs)
    budget = min(cfg.edge_budget, remaining)
    if budget < cfg.edge_budget:
        warnings.warn(f"edge budget truncated to {budget}: domain exhausted", RuntimeWarning)
    deg = (obs.degrees() if degrees is None else np.asarray(degrees)).astype(float).copy()
    dbar = deg.mean()

    q1 = min(math.ceil(cfg.balance_fraction * cfg.edge_budget), budget)
    new_rows, new_cols = [], []
    for k in range(q1):
        seed = queried_node if rng.random() < cfg.explore_prob else best_node
        partners = ~(mask[seed, :] | mask[:, seed])
        partners[seed] = False
        if not partners.any():
            info.diverted = q1 - k
            break
        gap = dbar - deg if cfg.deficit == "signed" else np.abs(dbar - deg)
        u = int(np.argmax(np.where(partners, gap, -np.inf)))
        a, b = min(seed, u), max(seed, u)
        mask[a, b] = True
        deg[seed] += 1
        deg[u] += 1
        new_rows.append(a)
        new_cols.append(b)
        info.seed_edges.append((a, b))
        info.seeds.append(seed)

    q2 = budget - len(new_rows)
    pick = sample_unobserved(mask, q2, rng)
    info.uniform_edges = len(pick)
    rows = np.concatenate([np.asarray(new_rows, dtype=np.int64), pick[:, 0]])
    cols = np.concatenate([np.asarray(new_cols, dtype=np.int64), pick[:, 1]])
    return obs.union(graph, rows, cols)


def uniform_edge_sample(obs: ObservationSet, graph: Graph, count: int, rng=None):
    """Add ``count`` pairs drawn uniformly without replacement from the unobserved ones."""
    rng = np.random.default_rng(rng)
    remaining = _total_pairs(obs.n) - len(obs)
    if count > remaining:
        warnings.warn(f"uniform sample clipped from {count} to {remaining} pairs", RuntimeWarning)
        count = remaining
    pick = sample_unobserved(_upper_mask(obs), count, rng)
    return obs.union(graph, pick[:, 0], pick[:, 1])


def seed_only_sample(obs: ObservationSet, graph: Graph, seed_node: int, count: int, rng=None):
    """Attach ``count`` uniformly chosen unobserved partners to ``seed_node``."""
    rng = np.random.default_rng(rng)
    mask = _upper_mask(obs)
    partners = np.flatnonzero(~(mask[seed_node, :] | mask[:, seed_node]))
    partners = partners[partners != seed_node]
    take = rng.choice(partners, size=min(count, partners.size), replace=False)
    return obs.union(graph, np.full(take.size, seed_node), take)


@dataclass(frozen=True)
class ObservationStats:
    num_observed: int
    avg_degree: float
    degree_imbalance: float
    lambda2: float
    spectral_gap_stat: float
    incoherence: float
    rank: int | None
    alpha: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def incoherence(basis) -> float:
    """``(n / r) max_i |basis[i, :]|^2`` for an ``n x r`` orthonormal basis."""
    basis = np.asarray(basis, dtype=float)
    n, r = basis.shape
    return float(n / r * (basis * basis).sum(axis=1).max())


def observation_stats(obs: ObservationSet, n=None, basis=None, weighted=False) -> ObservationStats:
    """Degree and spectral statistics of the observation graph.

    ``lambda2`` is the second-largest eigenvalue of the 0/1 pattern (or of
    the observed weights with ``weighted``). ``incoherence`` and ``alpha``
    need the ground-truth eigenbasis ``basis`` and are NaN without it.
    """
    n = obs.n if n is None else n
    if n < 2:
        raise InputError("observation statistics need n >= 2")
    m = len(obs)
    deg = obs.degrees().astype(float)
    dbar = 2.0 * m / n
    phi = float(np.abs(deg - dbar).max())
    if m == 0:
        lam2, xi = float("nan"), float("nan")
    else:
        if weighted:
            M = np.zeros((n, n))
            M[obs.rows, obs.cols] = obs.values
            M[obs.cols, obs.rows] = obs.values
        else:
            M = obs.pattern().astype(float)
        lam2 = float(np.linalg.eigvalsh(M)[-2])
        xi = dbar - lam2
    if basis is not None:
        mu = incoherence(basis)
        r = np.asarray(basis).shape[1]
        alpha = mu * r * n / m * (xi + phi) if m else float("nan")
    else:
        mu, r, alpha = float("nan"), None, float("nan")
    return ObservationStats(m, dbar, phi, lam2, xi, mu, r, alpha)


@dataclass
class PhaseConfig:
    """Training setup used to decide recovery in the phase experiment.

    With ``d1`` unset the model gets ``overparam * rank`` components; spare
    components let gradient descent escape the saddle at ``gamma_i = 0``
    far faster than an exactly-sized model does.
    """

    d1: int | None = None
    overparam: int = 5
    hidden: tuple = ()
    epochs: int = 12000
    success_tol: float = 1e-2
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        tau=1e-6, mu2=0.0, muQ=1e-3, muF=0.0, batch_sizes=(1024, 1, 256),
        learning_rates=(1e-3, 1.0, 0.0)))


def _sample_for_phase(graph, size, kind, rng):
    empty = ObservationSet(graph.n)
    if kind == "uniform":
        return uniform_edge_sample(empty, graph, size, rng)
    if kind == "balanced":
        obs = empty
        step = max(1, graph.n // 4)
        while len(obs) < size:
            q = min(step, size - len(obs))
            v, b = rng.integers(graph.n, size=2)
            cfg = SamplerConfig(q, rng_seed=None)
            obs = balanced_edge_sample(obs, graph, int(v), int(b), cfg, rng=rng)
        return obs
    raise InputError(f"unknown sampler kind {kind!r}")


def recover(graph: Graph, obs: ObservationSet, d1, phase: PhaseConfig, seed):
    """Fit a completion-only surrogate to ``obs`` and return it."""
    cfg = TrainConfig(**{**phase.train.__dict__, "rng_seed": seed})
    s = SpectralSurrogate.create(graph.n, d1, 1, hidden=phase.hidden, rng_seed=seed)
    trainer = SurrogateTrainer(s, cfg)
    if len(obs):
        trainer.train_round(obs, phase.epochs)
    return trainer.surrogate


def recovery_phase_experiment(rank, n, sample_grid, trials, sampler_kind="uniform",
                              phase: PhaseConfig | None = None, rng_seed=0, out_csv=None):
    """Success rate of exact recovery against the number of observed pairs.

    Each trial draws a fresh rank-``rank`` dense RDPG ground truth, samples
    ``|Omega|`` pairs (capped at all pairs), trains the completion model and
    counts a success when the off-diagonal relative Frobenius error is at
    most ``phase.success_tol``. Returns the per-trial rows and, if
    ``out_csv`` is set, writes them there.
    """
    phase = phase or PhaseConfig()
    d1 = phase.d1 or phase.overparam * rank
    rows = []
    seeds = np.random.SeedSequence(rng_seed).spawn(len(sample_grid) * trials)
    for gi, size in enumerate(sample_grid):
        size = min(int(size), _total_pairs(n))
        for t in range(trials):
            ss = seeds[gi * trials + t]
            g_seed, s_seed, t_seed = ss.generate_state(3)
            graph = graph_from_latent(rdpg_latent(n, rank, int(g_seed)))
            rng = np.random.default_rng(int(s_seed))
            obs = _sample_for_phase(graph, size, sampler_kind, rng)
            t0 = time.perf_counter()
            s = recover(graph, obs, d1, phase, int(t_seed))
            err = relative_offdiag_error(s.dense(), graph.A)
            rows.append({"omega_size": size, "trial": t, "rel_error": err,
                         "success": int(err <= phase.success_tol),
                         "sampler_kind": sampler_kind})
            logger.info("phase |Omega|=%d trial %d: rel_error=%.3e (%.1fs)",
                        size, t, err, time.perf_counter() - t0)
    if out_csv is not None:
        write_phase_csv(rows, out_csv)
    return rows


PHASE_COLUMNS = ("omega_size", "trial", "rel_error", "success", "sampler_kind")


def write_phase_csv(rows, path: str | PathLike):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PHASE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({**r, "rel_error": repr(float(r["rel_error"]))})


def success_rates(rows):
    """``{omega_size: mean success}`` from phase-experiment rows."""
    out = {}
    for r in rows:
        out.setdefault(r["omega_size"], []).append(r["success"])
    return {k: float(np.mean(v)) for k, v in out.items()}
