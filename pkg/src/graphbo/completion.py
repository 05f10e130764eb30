"""Low-rank spectral completion of a partially observed adjacency matrix.

The surrogate is ``A_tilde = Q diag(gamma) Q^T`` where the rows of ``Q`` (and
of the embedding matrix ``F``) are produced by small per-node networks. The
joint mini-batch objective is

    L1 + mu2 * L2 + muQ * ortho(Q) + muF * ortho(F)

trained with Adam on the network parameters and Adam followed by
soft-thresholding on ``gamma``. All gradients are computed by hand.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from . import embedding
from .errors import InputError
from .graph_core import ObservationSet
from .optim import Adam

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda out: 1.0 - out**2),
    "identity": (lambda x: x, lambda out: np.ones_like(out)),
}


class NodeRepresentationModel:
    """Feed-forward map from a learned per-node input row to an output row.

    ``layers`` is a list of ``(W, b, activation)`` with ``W`` of shape
    ``(fan_in, fan_out)``. With no layers the model is the free matrix
    ``embed_table`` itself.
    """

    def __init__(self, embed_table, layers=()):
        self.embed_table = np.asarray(embed_table, dtype=float)
        self.layers = [(np.asarray(W, dtype=float), np.asarray(b, dtype=float), act)
                       for W, b, act in layers]
        width = self.embed_table.shape[1]
        for W, b, act in self.layers:
            if W.shape[0] != width or b.shape != (W.shape[1],):
                raise InputError("layer shapes do not chain")
            if act not in _ACTIVATIONS:
                raise InputError(f"unknown activation {act!r}")
            width = W.shape[1]
        self.output_dim = width

    @classmethod
    def create(cls, n, output_dim, hidden=(64,), input_dim=None,
               activation="tanh", rng=None):
        """Random initialisation scaled by ``1/sqrt(fan_in)``."""
        rng = np.random.default_rng(rng)
        h = output_dim if input_dim is None else input_dim
        if not hidden and h != output_dim:
            raise InputError("a model without hidden layers needs input_dim == output_dim")
        table = rng.standard_normal((n, h)) / np.sqrt(h)
        layers = []
        widths = [h, *hidden, output_dim]
        for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            act = "identity" if k == len(widths) - 2 else activation
            W = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            layers.append((W, np.zeros(fan_out), act))
        return cls(table, layers)

    @property
    def n(self):
        return self.embed_table.shape[0]

    def params(self):
        out = [self.embed_table]
        for W, b, _ in self.layers:
            out += [W, b]
        return out

    def set_params(self, arrays):
        arrays = list(arrays)
        self.embed_table = arrays[0]
        self.layers = [(arrays[1 + 2 * k], arrays[2 + 2 * k], act)
                       for k, (_, _, act) in enumerate(self.layers)]

    def copy(self):
        return NodeRepresentationModel(self.embed_table.copy(),
                                       [(W.copy(), b.copy(), a) for W, b, a in self.layers])

    def __call__(self, nodes=None):
        return self.forward(nodes)[0]

    def forward(self, nodes=None):
        nodes = np.arange(self.n) if nodes is None else np.asarray(nodes)
        x = self.embed_table[nodes]
        acts = [x]
        for W, b, act in self.layers:
            x = _ACTIVATIONS[act][0](x @ W + b)
            acts.append(x)
        return x, (nodes, acts)

    def backward(self, cache, grad_out):
        """Gradients of a scalar loss w.r.t. :meth:`params`, given dLoss/dOutput."""
        nodes, acts = cache
        g = grad_out
        layer_grads = []
        for k in range(len(self.layers) - 1, -1, -1):
            W, _, act = self.layers[k]
            g = g * _ACTIVATIONS[act][1](acts[k + 1])
            layer_grads.append((acts[k].T @ g, g.sum(axis=0)))
            g = g @ W.T
        table_grad = np.zeros_like(self.embed_table)
        np.add.at(table_grad, nodes, g)
        out = [table_grad]
        for gW, gb in reversed(layer_grads):
            out += [gW, gb]
        return out


@dataclass
class TrainConfig:
    """Weights, batch sizes and step sizes of the joint objective."""

    tau: float = 0.5
    mu2: float = 0.5
    muQ: float = 0.1
    muF: float = 0.1
    batch_sizes: tuple = (128, 256, 256)
    learning_rates: tuple = (1e-3, 5e-4, 1e-3)
    epochs_per_round: int = 20
    rng_seed: int = 0
    importance_weights: bool = True

    def __post_init__(self):
        self.batch_sizes = tuple(int(b) for b in self.batch_sizes)
        self.learning_rates = tuple(float(x) for x in self.learning_rates)
        if min(self.tau, self.mu2, self.muQ, self.muF) < 0:
            raise InputError("loss weights must be nonnegative")
        if len(self.batch_sizes) != 3 or min(self.batch_sizes) < 1:
            raise InputError("batch_sizes must be three positive integers")
        if len(self.learning_rates) != 3 or min(self.learning_rates) < 0:
            raise InputError("learning_rates must be three nonnegative numbers")
        if self.epochs_per_round < 0:
            raise InputError("epochs_per_round must be nonnegative")


@dataclass
class SpectralSurrogate:
    """``A_tilde = Q diag(gamma) Q^T`` plus the jointly trained embedding model."""

    gamma: np.ndarray
    q_model: NodeRepresentationModel
    f_model: NodeRepresentationModel

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.shape != (self.q_model.output_dim,):
            raise InputError("gamma length must match the Q model output")
        if self.q_model.n != self.f_model.n:
            raise InputError("Q and F models cover different node counts")

    @classmethod
    def create(cls, n, d1, d2, hidden=(64,), rng_seed=None):
        rng = np.random.default_rng(rng_seed)
        q = NodeRepresentationModel.create(n, d1, hidden=hidden, rng=rng)
        f = NodeRepresentationModel.create(n, d2, hidden=hidden, rng=rng)
        return cls(0.1 * rng.standard_normal(d1), q, f)

    @property
    def n(self):
        return self.q_model.n

    @property
    def d1(self):
        return self.gamma.size

    @property
    def d2(self):
        return self.f_model.output_dim

    def Q(self, nodes=None):
        return self.q_model(nodes)

    def F(self, nodes=None):
        return self.f_model(nodes)

    def dense(self):
        Q = self.Q()
        return (Q * self.gamma) @ Q.T

    def effective_rank(self, rank_tol=1e-4):
        g = np.abs(self.gamma)
        if g.max(initial=0.0) == 0.0:
            return 0
        return int(np.count_nonzero(g > rank_tol * g.max()))

    def copy(self):
        return SpectralSurrogate(self.gamma.copy(), self.q_model.copy(), self.f_model.copy())

    def save(self, path: str | PathLike):
        """Checkpoint gamma and both models to an ``.npz`` archive."""
        arrays = {"format_version": np.array(CHECKPOINT_VERSION), "gamma": self.gamma}
        for tag, model in (("q", self.q_model), ("f", self.f_model)):
            arrays[f"{tag}_acts"] = np.array([a for _, _, a in model.layers], dtype=str)
            for k, p in enumerate(model.params()):
                arrays[f"{tag}_{k}"] = p
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | PathLike):
        with np.load(path) as z:
            version = int(z["format_version"])
            if version != CHECKPOINT_VERSION:
                raise InputError(f"unsupported checkpoint version {version}")
            models = []
            for tag in ("q", "f"):
                acts = [str(a) for a in z[f"{tag}_acts"]]
                params = [z[f"{tag}_{k}"] for k in range(1 + 2 * len(acts))]
                layers = [(params[1 + 2 * k], params[2 + 2 * k], a) for k, a in enumerate(acts)]
                models.append(NodeRepresentationModel(params[0], layers))
            return cls(z["gamma"], *models)


def _pair_values(gamma, qu, qv):
    # multiply the two node rows first so (u, v) and (v, u) agree bitwise
    return ((qu * qv) * gamma).sum(axis=-1)


def surrogate_entry(s: SpectralSurrogate, u: int, v: int) -> float:
    """``sum_i gamma_i q_i(u) q_i(v)``."""
    q = s.Q(np.array([u, v]))
    return float(_pair_values(s.gamma, q[0], q[1]))


def _check_batch(size, name):
    if size == 0:
        raise InputError(f"{name} batch is empty")


def l1_loss_and_grad(gamma, Qu, Qv, a, tau):
    """Batch fit term plus nuclear penalty, with gradients of the fit term."""
    B = a.size
    resid = _pair_values(gamma, Qu, Qv) - a
    fit = float(resid @ resid) / B
    coef = (2.0 / B) * resid[:, None]
    dQu = coef * gamma * Qv
    dQv = coef * gamma * Qu
    dgamma = ((2.0 / B) * resid) @ (Qu * Qv)
    return fit + tau * np.abs(gamma).sum(), fit, dQu, dQv, dgamma


def batch_loss_l1(s: SpectralSurrogate, batch, tau: float) -> float:
    """Mini-batch completion loss over ``(u, v, A_uv)`` triples."""
    u, v, a = (np.asarray(x) for x in batch)
    _check_batch(a.size, "L1")
    Q = s.Q()
    return l1_loss_and_grad(s.gamma, Q[u], Q[v], a.astype(float), tau)[0]


def soft_threshold_gamma(gamma, threshold: float):
    """Proximal map of ``threshold * |x|_1``."""
    if threshold < 0:
        raise InputError("threshold must be nonnegative")
    gamma = np.asarray(gamma, dtype=float)
    return np.sign(gamma) * np.maximum(np.abs(gamma) - threshold, 0.0)


def ortho_loss_and_grad(rows, n):
    """``|(n/B) M_B^T M_B - I|_F^2`` and its gradient w.r.t. the batch rows."""
    B, d = rows.shape
    G = (n / B) * (rows.T @ rows) - np.eye(d)
    return float((G * G).sum()), (4.0 * n / B) * (rows @ G)


def ortho_penalty(M, batch, n: int) -> float:
    """Soft orthonormality penalty estimated on the node batch ``batch``."""
    batch = np.asarray(batch)
    _check_batch(batch.size, "orthogonality")
    return ortho_loss_and_grad(np.asarray(M, dtype=float)[batch], n)[0]


class MixtureSampler:
    """Two-stage sampler: a component ``i`` with weight ``|gamma_i| / sum|gamma|``,
    then ``u`` and ``v`` independently with probability ``|q_i(.)| / |q_i|_1``.

    Cumulative tables are built once; each draw costs a bisection per stage.
    """

    def __init__(self, gamma, Q):
        gamma = np.abs(np.asarray(gamma, dtype=float))
        mass = np.abs(np.asarray(Q, dtype=float))
        col_mass = mass.sum(axis=0)
        live = (gamma > 0) & (col_mass > 0)
        if not live.any():
            raise InputError("surrogate has no mass to sample from")
        w = np.where(live, gamma, 0.0)
        self.weights = w / w.sum()
        self._comp_cdf = np.cumsum(self.weights)
        self._comp_cdf[-1] = 1.0
        safe = np.where(col_mass > 0, col_mass, 1.0)
        self.node_probs = mass / safe
        self._node_cdf = np.cumsum(self.node_probs, axis=0)
        self._node_cdf[-1] = 1.0
        self.n = Q.shape[0]

    def _pick_nodes(self, comps, r):
        out = np.empty(comps.size, dtype=np.int64)
        for i in np.unique(comps):
            sel = comps == i
            out[sel] = np.searchsorted(self._node_cdf[:, i], r[sel], side="right")
        return np.minimum(out, self.n - 1)

    def pmf(self, u, v):
        """Probability of drawing the ordered pair ``(u, v)``."""
        return (self.node_probs[u] * self.node_probs[v]) @ self.weights

    def sample(self, count, rng):
        r = rng.random((3, count))
        comps = np.searchsorted(self._comp_cdf, r[0], side="right")
        comps = np.minimum(comps, self.weights.size - 1)
        return self._pick_nodes(comps, r[1]), self._pick_nodes(comps, r[2])


def rank_one_mixture_sample(s: SpectralSurrogate, count: int, rng, Q=None):
    """Draw ``count`` node pairs from the rank-one mixture of the surrogate."""
    Q = s.Q() if Q is None else Q
    return MixtureSampler(s.gamma, Q).sample(count, np.random.default_rng(rng))


@dataclass
class JointBatch:
    """One epoch's samples plus the surrogate statistics frozen for it."""

    b1: tuple
    b2: tuple
    b3: np.ndarray
    degrees: np.ndarray
    mass: float
    w2: np.ndarray | None = None


@dataclass
class JointGrads:
    q: list
    gamma: np.ndarray
    f: list


def sample_joint_batch(s, obs: ObservationSet, cfg: TrainConfig, rng) -> JointBatch:
    """Draw B1 from the observations, B2 from the surrogate and B3 from the nodes.

    Degrees and total mass are computed from the current surrogate and held
    fixed while the batch is used, so the L2 term only trains the embedding.

    With ``cfg.importance_weights`` each B2 pair carries the weight
    ``max(A_tilde(u, v), 0) / (mass * p(u, v))``. The mixture only matches
    ``A_tilde / mass`` for nonnegative factors, so without the weights the L2
    estimate is biased whenever ``Q`` has mixed signs.
    """
    B1, B2, B3 = cfg.batch_sizes
    if len(obs) == 0:
        raise InputError("training needs at least one observed pair")
    Q = s.Q()
    if len(obs) > B1:
        idx = rng.choice(len(obs), size=B1, replace=False)
    else:
        idx = np.arange(len(obs))
    b1 = (obs.rows[idx], obs.cols[idx], obs.values[idx])
    w2 = None
    if cfg.mu2 > 0 and np.abs(s.gamma).sum() > 0:
        sampler = MixtureSampler(s.gamma, Q)
        b2 = sampler.sample(B2, rng)
    else:
        b2 = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    b3 = rng.choice(s.n, size=B3, replace=False) if B3 < s.n else np.arange(s.n)
    degrees = embedding.surrogate_degrees(s, Q=Q)
    mass = max(embedding.surrogate_mass(s, Q=Q), 0.0)
    if cfg.importance_weights and b2[0].size:
        u2, v2 = b2
        entry = np.maximum(_pair_values(s.gamma, Q[u2], Q[v2]), 0.0)
        w2 = entry / (mass * sampler.pmf(u2, v2)) if mass > 0 else np.zeros(u2.size)
    return JointBatch(b1, b2, b3, degrees, mass, w2)


def joint_loss(s: SpectralSurrogate, batch: JointBatch, cfg: TrainConfig,
               with_grad=True, l1_subgradient=False):
    """Total mini-batch loss, its four terms and (optionally) the gradients.

    The returned gamma gradient covers the smooth part only unless
    ``l1_subgradient`` is set, in which case ``tau * sign(gamma)`` is added.
    """
    u1, v1, a1 = batch.b1
    u2, v2 = batch.b2
    b3 = batch.b3
    n = s.n

    q_nodes, q_inv = np.unique(np.concatenate([u1, v1, b3]), return_inverse=True)
    Qb, q_cache = s.q_model.forward(q_nodes)
    k1 = u1.size
    iu1, iv1, i3 = q_inv[:k1], q_inv[k1:2 * k1], q_inv[2 * k1:]
    l1, _, dQu, dQv, dgamma = l1_loss_and_grad(s.gamma, Qb[iu1], Qb[iv1], a1, cfg.tau)
    lo1, dQ3 = ortho_loss_and_grad(Qb[i3], n)

    f_nodes, f_inv = np.unique(np.concatenate([u2, v2, b3]), return_inverse=True)
    Fb, f_cache = s.f_model.forward(f_nodes)
    k2 = u2.size
    iu2, iv2, j3 = f_inv[:k2], f_inv[k2:2 * k2], f_inv[2 * k2:]
    if k2:
        l2, dFu, dFv = embedding.l2_loss_and_grad(
            Fb[iu2], Fb[iv2], batch.degrees[u2], batch.degrees[v2], batch.mass, batch.w2)
    else:
        l2, dFu, dFv = 0.0, np.zeros((0, s.d2)), np.zeros((0, s.d2))
    lo2, dF3 = ortho_loss_and_grad(Fb[j3], n)

    total = l1 + cfg.mu2 * l2 + cfg.muQ * lo1 + cfg.muF * lo2
    terms = {"l1": l1, "l2": l2, "ortho1": lo1, "ortho2": lo2, "total": total}
    if not with_grad:
        return total, terms, None

    gQ = np.zeros_like(Qb)
    np.add.at(gQ, iu1, dQu)
    np.add.at(gQ, iv1, dQv)
    np.add.at(gQ, i3, cfg.muQ * dQ3)
    gF = np.zeros_like(Fb)
    np.add.at(gF, iu2, cfg.mu2 * dFu)
    np.add.at(gF, iv2, cfg.mu2 * dFv)
    np.add.at(gF, j3, cfg.muF * dF3)
    if l1_subgradient:
        dgamma = dgamma + cfg.tau * np.sign(s.gamma)
    grads = JointGrads(s.q_model.backward(q_cache, gQ), dgamma,
                       s.f_model.backward(f_cache, gF))
    return total, terms, grads


@dataclass
class LossTrace:
    epochs: list = field(default_factory=list)
    aborted: bool = False

    @property
    def totals(self):
        return np.array([e["total"] for e in self.epochs])


class SurrogateTrainer:
    """Owns a surrogate, its optimiser state and RNG across training rounds."""

    def __init__(self, surrogate: SpectralSurrogate, cfg: TrainConfig):
        self.surrogate = surrogate
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.lr_scale = 1.0
        shapes = ([p.shape for p in surrogate.q_model.params()] + [surrogate.gamma.shape]
                  + [p.shape for p in surrogate.f_model.params()])
        self.adam = Adam(shapes)

    def _lrs(self):
        eta_q, eta_g, eta_f = (self.lr_scale * x for x in self.cfg.learning_rates)
        nq = len(self.surrogate.q_model.params())
        nf = len(self.surrogate.f_model.params())
        return [eta_q] * nq + [eta_g] + [eta_f] * nf, eta_g

    def _epoch(self, obs):
        s, cfg = self.surrogate, self.cfg
        batch = sample_joint_batch(s, obs, cfg, self.rng)
        total, terms, grads = joint_loss(s, batch, cfg)
        if not np.isfinite(total) or not all(np.all(np.isfinite(g)) for g in
                                              grads.q + [grads.gamma] + grads.f):
            return None
        lrs, eta_g = self._lrs()
        qp, fp = s.q_model.params(), s.f_model.params()
        new = self.adam.step(qp + [s.gamma] + fp, grads.q + [grads.gamma] + grads.f, lrs)
        nq = len(qp)
        s.q_model.set_params(new[:nq])
        s.gamma = soft_threshold_gamma(new[nq], cfg.tau * eta_g)
        s.f_model.set_params(new[nq + 1:])
        return terms

    def train_round(self, obs: ObservationSet, epochs=None) -> LossTrace:
        epochs = self.cfg.epochs_per_round if epochs is None else epochs
        trace = LossTrace()
        for _ in range(epochs):
            saved = (self.surrogate.copy(), self.adam.copy(),
                     self.rng.bit_generator.state)
            terms = self._epoch(obs)
            if terms is None:
                logger.warning("non-finite loss; halving learning rates and retrying")
                self.surrogate.gamma = saved[0].gamma
                self.surrogate.q_model, self.surrogate.f_model = saved[0].q_model, saved[0].f_model
                self.adam = saved[1]
                self.rng.bit_generator.state = saved[2]
                self.lr_scale *= 0.5
                terms = self._epoch(obs)
                if terms is None:
                    logger.error("loss still non-finite after halving; aborting the round")
                    self.surrogate.gamma = saved[0].gamma
                    self.surrogate.q_model, self.surrogate.f_model = saved[0].q_model, saved[0].f_model
                    self.adam = saved[1]
                    trace.aborted = True
                    break
            trace.epochs.append(terms)
        return trace


def train_round(s: SpectralSurrogate, obs: ObservationSet, cfg: TrainConfig):
    """Run ``cfg.epochs_per_round`` epochs from a fresh optimiser on a copy of ``s``."""
    trainer = SurrogateTrainer(s.copy(), cfg)
    trace = trainer.train_round(obs)
    return trainer.surrogate, trace


def relative_offdiag_error(A_hat, A):
    """``|A_hat - A|_F / |A|_F`` over off-diagonal entries."""
    off = ~np.eye(A.shape[0], dtype=bool)
    return float(np.linalg.norm((A_hat - A)[off]) / np.linalg.norm(A[off]))


def _group_params(s):
    return {"q": s.q_model.params(), "gamma": [s.gamma], "f": s.f_model.params()}


def gradient_check(s: SpectralSurrogate, obs: ObservationSet, cfg: TrainConfig,
                   eps=1e-5, rng_seed=0):
    """Largest relative deviation between analytic and central-difference gradients.

    One batch is drawn with ``rng_seed`` and frozen. For every parameter
    array the error is ``max|analytic - numeric| / max|numeric|``; the
    function returns the maximum over arrays.
    """
    s = s.copy()
    batch = sample_joint_batch(s, obs, cfg, np.random.default_rng(rng_seed))
    _, _, grads = joint_loss(s, batch, cfg, l1_subgradient=True)
    analytic = {"q": grads.q, "gamma": [grads.gamma], "f": grads.f}

    def loss():
        return joint_loss(s, batch, cfg, with_grad=False)[0]

    worst = 0.0
    for group, arrays in _group_params(s).items():
        for arr, ga in zip(arrays, analytic[group]):
            num = np.zeros_like(arr)
            flat, nflat = arr.reshape(-1), num.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                up = loss()
                flat[k] = orig - eps
                down = loss()
                flat[k] = orig
                nflat[k] = (up - down) / (2 * eps)
            scale = np.abs(num).max()
            if scale == 0.0:
                err = np.abs(ga).max()
            else:
                err = np.abs(ga - num).max() / scale
            worst = max(worst, float(err))
    return worst


__all__ = [
    "Adam", "JointBatch", "LossTrace", "MixtureSampler", "NodeRepresentationModel",
    "SpectralSurrogate", "SurrogateTrainer", "TrainConfig", "batch_loss_l1",
    "gradient_check", "joint_loss", "ortho_penalty", "rank_one_mixture_sample",
    "relative_offdiag_error", "sample_joint_batch", "soft_threshold_gamma",
    "surrogate_entry", "train_round",
]
