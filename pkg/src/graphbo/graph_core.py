"""Ground-truth graphs, observation sets, generators and node objectives."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, InputError, ParseError

logger = logging.getLogger(__name__)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph held as a dense adjacency matrix.

    ``A`` is symmetric with zero diagonal and entries in [0, 1]. ``node_ids``
    maps dense indices back to the labels of the file the graph came from
    (``None`` when the ids are already ``0..n-1``).
    """

    A: np.ndarray
    node_ids: np.ndarray | None = None

    def __post_init__(self):
        A = _frozen(self.A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"adjacency must be square, got shape {A.shape}")
        if not np.array_equal(A, A.T):
            raise InputError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise InputError("adjacency must have a zero diagonal")
        if A.size and (A.min() < 0 or A.max() > 1):
            raise InputError("edge weights must lie in [0, 1]")
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.A.sum(axis=1)

    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.A, 1)))

    def neighbors(self, u: int) -> np.ndarray:
        return np.flatnonzero(self.A[u])

    def laplacian(self) -> np.ndarray:
        """Combinatorial Laplacian ``D - A``."""
        return np.diag(self.degrees) - self.A

    def save(self, path: str | PathLike) -> None:
        """Write the graph as ``u v w`` lines, one per undirected edge."""
        save_edge_list(self, path)


class ObservationSet:
    """Known node pairs ``(i, j)``, ``i < j``, with their observed weights.

    Instances are treated as values: :meth:`union` returns a new set.
    """

    def __init__(self, n: int, rows=(), cols=(), values=()):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise InputError("rows, cols and values must have equal length")
        if rows.size:
            if min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n:
                raise InputError(f"pair index out of range for n={n}")
            if np.any(rows == cols):
                raise InputError("diagonal pairs cannot be observed")
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        mask = np.zeros((n, n), dtype=bool)
        mask[lo, hi] = True
        if np.count_nonzero(mask) != lo.size:
            raise InputError("duplicate pair in observation set")
        self.n = int(n)
        self.rows, self.cols, self.values = lo, hi, values
        for a in (self.rows, self.cols, self.values):
            a.setflags(write=False)
        self._mask = mask

    @classmethod
    def from_graph(cls, graph: Graph, pairs: Iterable[tuple[int, int]]) -> ObservationSet:
        """Observe ``pairs`` of ``graph`` without noise."""
        pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        lo, hi = pairs.min(axis=1), pairs.max(axis=1)
        if lo.size and (lo.min() < 0 or hi.max() >= graph.n):
            raise InputError(f"pair index out of range for n={graph.n}")
        return cls(graph.n, lo, hi, graph.A[lo, hi])

    def __len__(self) -> int:
        return self.rows.size

    def __contains__(self, pair) -> bool:
        i, j = pair
        return bool(self._mask[min(i, j), max(i, j)])

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack([self.rows, self.cols])

    def pattern(self) -> np.ndarray:
        """Symmetric boolean matrix of observed pairs."""
        return self._mask | self._mask.T

    def degrees(self) -> np.ndarray:
        """Number of observed pairs incident to every node."""
        return (np.bincount(self.rows, minlength=self.n)
                + np.bincount(self.cols, minlength=self.n))

    def unobserved_pairs(self) -> np.ndarray:
        """All ``(i, j)``, ``i < j``, not yet observed, in row-major order."""
        free = np.triu(~self._mask, 1)
        return np.argwhere(free)

    def union(self, graph: Graph, rows, cols) -> ObservationSet:
        """Add pairs observed on ``graph``; pairs already present are an error."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        return ObservationSet(
            self.n,
            np.concatenate([self.rows, lo]),
            np.concatenate([self.cols, hi]),
            np.concatenate([self.values, graph.A[lo, hi]]),
        )

    def save(self, path: str | PathLike) -> None:
        with open(path, "w") as fh:
            fh.write(f"# n {self.n}\n")
            for i, j, w in zip(self.rows, self.cols, self.values):
                fh.write(f"{i} {j} {float(w)!r}\n")

    @classmethod
    def load(cls, path: str | PathLike, n: int | None = None) -> ObservationSet:
        rows, cols, vals = [], [], []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.strip()
                if not text:
                    continue
                if text.startswith("#"):
                    parts = text[1:].split()
                    if len(parts) == 2 and parts[0] == "n" and n is None:
                        n = int(parts[1])
                    continue
                i, j, w = _parse_edge_line(path, lineno, text)
                rows.append(i)
                cols.append(j)
                vals.append(w)
        if n is None:
            n = max(max(rows, default=-1), max(cols, default=-1)) + 1
        return cls(n, rows, cols, vals)


@dataclass(frozen=True, eq=False)
class NodeSignal:
    """Objective values ``y`` over the nodes, with the cached maximiser."""

    y: np.ndarray
    argmax_value: float = field(init=False)
    argmax_node: int = field(init=False)

    def __post_init__(self):
        y = _frozen(self.y)
        if y.ndim != 1 or y.size == 0:
            raise InputError("signal must be a non-empty vector")
        object.__setattr__(self, "y", y)
        # np.argmax returns the first maximiser, i.e. the smallest index
        object.__setattr__(self, "argmax_node", int(np.argmax(y)))
        object.__setattr__(self, "argmax_value", float(y[self.argmax_node]))

    @property
    def n(self) -> int:
        return self.y.size


def project_observed(obs: ObservationSet, n: int) -> np.ndarray:
    """Dense ``P_Omega(A)``: observed weights at their pairs, zero elsewhere."""
    if len(obs) and max(obs.rows.max(), obs.cols.max()) >= n:
        raise InputError(f"observation index out of range for n={n}")
    M = np.zeros((n, n))
    M[obs.rows, obs.cols] = obs.values
    M[obs.cols, obs.rows] = obs.values
    return M


def _symmetric_from_upper(n, rows, cols, weights) -> np.ndarray:
    A = np.zeros((n, n))
    A[rows, cols] = weights
    A[cols, rows] = weights
    return A


def sbm_generate(n: int, blocks: Sequence[int], p_in: float, p_out: float,
                 rng_seed=None) -> Graph:
    """Stochastic block model with edge weights uniform on [0, 1].

    Nodes are laid out block by block, so block ``b`` owns a contiguous
    index range.
    """
    blocks = [int(b) for b in blocks]
    if sum(blocks) != n or any(b < 0 for b in blocks):
        raise InputError(f"block sizes {blocks} do not sum to n={n}")
    for p in (p_in, p_out):
        if not 0.0 <= p <= 1.0:
            raise InputError(f"probability {p} outside [0, 1]")
    rng = np.random.default_rng(rng_seed)
    label = np.repeat(np.arange(len(blocks)), blocks)
    rows, cols = np.triu_indices(n, 1)
    prob = np.where(label[rows] == label[cols], p_in, p_out)
    keep = rng.random(rows.size) < prob
    weights = rng.random(rows.size)
    return Graph(_symmetric_from_upper(n, rows[keep], cols[keep], weights[keep]))


def rdpg_latent(n: int, latent_dim: int, rng_seed=None) -> np.ndarray:
    """Latent positions uniform on the nonnegative part of the unit sphere."""
    if not 1 <= latent_dim <= n:
        raise InputError(f"latent_dim={latent_dim} must lie in [1, n={n}]")
    rng = np.random.default_rng(rng_seed)
    X = np.abs(rng.standard_normal((n, latent_dim)))
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    # a zero draw has probability zero, but guard it anyway
    norms[norms == 0] = 1.0
    return X / norms


def rdpg_generate(n: int, latent_dim: int, rng_seed=None) -> Graph:
    """Dense weighted random dot product graph, ``A_ij = <x_i, x_j>``."""
    X = rdpg_latent(n, latent_dim, rng_seed)
    return graph_from_latent(X)


def graph_from_latent(X: np.ndarray) -> Graph:
    A = np.clip(X @ X.T, 0.0, 1.0)
    A = np.triu(A, 1)
    return Graph(A + A.T)


def power_law_generate(n: int, attachment: int, rng_seed=None) -> Graph:
    """Barabasi-Albert preferential attachment with uniform [0, 1] weights."""
    if not 1 <= attachment < n:
        raise InputError(f"attachment m={attachment} must satisfy 1 <= m < n={n}")
    rng = np.random.default_rng(rng_seed)
    nx_seed = int(rng.integers(2**31 - 1))
    G = nx.barabasi_albert_graph(n, attachment, seed=nx_seed)
    edges = np.array(sorted((min(e), max(e)) for e in G.edges()), dtype=np.int64)
    weights = rng.random(len(edges))
    return Graph(_symmetric_from_upper(n, edges[:, 0], edges[:, 1], weights))


def largest_component(graph: Graph) -> np.ndarray:
    """Sorted node indices of the largest connected component."""
    ncomp, labels = connected_components(graph.A > 0, directed=False)
    if ncomp == 1:
        return np.arange(graph.n)
    sizes = np.bincount(labels)
    return np.flatnonzero(labels == np.argmax(sizes))


def canonical_sign(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first clearly non-zero entry is positive."""
    vectors = np.array(vectors, dtype=float)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        big = np.abs(col) > 1e-8 * np.abs(col).max()
        if big.any() and col[np.argmax(big)] < 0:
            vectors[:, j] = -col
    return vectors


def laplacian_eigenbasis(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of ``D - A`` in ascending order with canonical signs."""
    L = np.diag(A.sum(axis=1)) - A
    w, V = np.linalg.eigh(L)
    return w, canonical_sign(V)


def bandlimited_signal(g: Graph, k: int, rng_seed=None) -> NodeSignal:
    """Random combination of the ``k`` lowest Laplacian eigenvectors.

    The coefficients are standard normal. On a disconnected graph the signal
    is built on the largest component and every other node receives the
    component minimum, so it can never be the maximiser.
    """
    if not 1 <= k <= g.n:
        raise InputError(f"bandwidth k={k} must lie in [1, n={g.n}]")
    rng = np.random.default_rng(rng_seed)
    comp = largest_component(g)
    if comp.size < g.n:
        warnings.warn(
            f"graph is disconnected; building the signal on the largest "
            f"component ({comp.size} of {g.n} nodes)", RuntimeWarning)
        if k > comp.size:
            raise InputError(f"k={k} exceeds the largest component size {comp.size}")
    sub = g.A[np.ix_(comp, comp)]
    _, V = laplacian_eigenbasis(sub)
    alpha = rng.standard_normal(k)
    f = V[:, :k] @ alpha
    y = np.full(g.n, f.min())
    y[comp] = f
    return NodeSignal(y)


def transition_matrix(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic ``D^-1 A`` and the boolean mask of dangling nodes."""
    deg = g.degrees
    dangling = deg == 0
    safe = np.where(dangling, 1.0, deg)
    return g.A / safe[:, None], dangling


def pagerank(g: Graph, damping: float = 0.85, tol: float = 1e-12,
             max_iter: int = 1000) -> NodeSignal:
    """PageRank by power iteration with uniform teleportation.

    Dangling nodes spread their mass uniformly. Iteration stops once the
    L1 change drops below ``tol``; otherwise :class:`ConvergenceError` is
    raised carrying the last iterate.
    """
    n = g.n
    if n < 1:
        raise InputError("pagerank needs at least one node")
    if not 0.0 < damping < 1.0:
        raise InputError(f"damping={damping} must lie in (0, 1)")
    P, dangling = transition_matrix(g)
    x = np.full(n, 1.0 / n)
    delta = np.inf
    for _ in range(max_iter):
        nxt = damping * (P.T @ x) + (damping * x[dangling].sum() + 1.0 - damping) / n
        nxt /= nxt.sum()
        delta = np.abs(nxt - x).sum()
        x = nxt
        if delta < tol:
            return NodeSignal(x)
    raise ConvergenceError(
        f"pagerank did not converge in {max_iter} iterations (L1 change {delta:.3e})",
        last=x, residual=delta)


def _parse_edge_line(path, lineno, text):
    parts = text.split()
    if len(parts) not in (2, 3):
        raise ParseError(path, lineno, text, "expected 'u v [w]'")
    try:
        u, v = int(parts[0]), int(parts[1])
        w = float(parts[2]) if len(parts) == 3 else 1.0
    except ValueError:
        raise ParseError(path, lineno, text, "non-numeric field") from None
    if u < 0 or v < 0:
        raise ParseError(path, lineno, text, "negative node id")
    if not 0.0 <= w <= 1.0:
        raise ParseError(path, lineno, text, "weight outside [0, 1]")
    return u, v, w


@dataclass
class EdgeListInfo:
    self_loops: int = 0
    duplicates: int = 0


def load_edge_list(path: str | PathLike, n_hint: int | None = None,
                   info: EdgeListInfo | None = None) -> Graph:
    """Read an undirected graph from whitespace-separated ``u v [w]`` lines.

    Blank lines and ``#`` comments are skipped. Duplicate pairs keep the
    last weight, self-loops are dropped and counted. When the ids fit in
    ``0..n_hint-1`` they are used as-is; otherwise they are remapped to dense
    indices in sorted order and the original labels kept on ``node_ids``.
    """
    info = info if info is not None else EdgeListInfo()
    edges: dict[tuple[int, int], float] = {}
    seen: set[int] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            u, v, w = _parse_edge_line(path, lineno, text)
            seen.update((u, v))
            if u == v:
                info.self_loops += 1
                continue
            key = (min(u, v), max(u, v))
            if key in edges:
                info.duplicates += 1
            edges[key] = w
    if info.self_loops:
        warnings.warn(f"{path}: dropped {info.self_loops} self-loop(s)", RuntimeWarning)

    ids = np.array(sorted(seen), dtype=np.int64)
    if n_hint is not None and (ids.size == 0 or ids[-1] < n_hint):
        n, node_ids = int(n_hint), None
        index = {i: i for i in ids.tolist()}
    elif ids.size and ids[0] == 0 and ids[-1] == ids.size - 1:
        n, node_ids = ids.size, None
        index = {i: i for i in ids.tolist()}
    else:
        n, node_ids = ids.size, ids
        index = {label: k for k, label in enumerate(ids.tolist())}

    A = np.zeros((n, n))
    for (u, v), w in edges.items():
        a, b = index[u], index[v]
        A[a, b] = A[b, a] = w
    logger.info("loaded %s: n=%d, edges=%d", path, n, len(edges))
    return Graph(A, node_ids=node_ids)


def save_edge_list(g: Graph, path: str | PathLike) -> None:
    labels = g.node_ids if g.node_ids is not None else np.arange(g.n)
    rows, cols = np.nonzero(np.triu(g.A, 1))
    with open(path, "w") as fh:
        for i, j in zip(rows, cols):
            fh.write(f"{labels[i]} {labels[j]} {float(g.A[i, j])!r}\n")
