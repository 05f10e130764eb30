"""Spectral embedding of the surrogate graph.

Everything here works from the factors ``(gamma, Q)`` of the surrogate and
never builds the n-by-n normalized Laplacian, except for the explicit dense
helper used in diagnostics.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)

DEGREE_FLOOR = 1e-6
NULL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SpectralEigenpairs:
    """Ascending eigenvalue estimates and row-normalized node embeddings.

    ``basis`` keeps the orthonormal columns before row normalization;
    ``zero_rows`` flags nodes whose embedding row vanished.
    """

    lambdas: np.ndarray
    phis: np.ndarray
    basis: np.ndarray | None = None
    zero_rows: np.ndarray | None = None

    @property
    def dim(self):
        return self.lambdas.size

    @property
    def n(self):
        return self.phis.shape[0]

    def to_csv(self, path: str | PathLike, node_ids=None):
        ids = np.arange(self.n) if node_ids is None else node_ids
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", *(repr(float(x)) for x in self.lambdas)])
            w.writerow(["node_id", *(f"phi_{i + 1}" for i in range(self.dim))])
            for u, row in zip(ids, self.phis):
                w.writerow([u, *(repr(float(x)) for x in row)])

    @classmethod
    def from_csv(cls, path: str | PathLike):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        lambdas = np.array([float(x) for x in rows[0][1:]])
        phis = np.array([[float(x) for x in r[1:]] for r in rows[2:]]).reshape(-1, lambdas.size)
        return cls(lambdas, phis)


def surrogate_mass(s, Q=None) -> float:
    """Sum of all surrogate entries, ``sum_i gamma_i (sum_u q_i(u))^2``."""
    Q = s.Q() if Q is None else Q
    colsum = Q.sum(axis=0)
    return float(s.gamma @ (colsum * colsum))


def surrogate_degrees(s, Q=None, floor=DEGREE_FLOOR, raw=False) -> np.ndarray:
    """Row sums of the surrogate in O(n d1), floored at ``floor`` unless ``raw``."""
    Q = s.Q() if Q is None else Q
    deg = Q @ (s.gamma * Q.sum(axis=0))
    return deg if raw else np.maximum(deg, floor)


def l2_loss_and_grad(Fu, Fv, deg_u, deg_v, mass, weights=None):
    """Smoothness batch loss and its gradients w.r.t. the two row blocks.

    ``weights`` are optional per-pair importance weights (default all 1).
    """
    B = Fu.shape[0]
    su = deg_u ** -0.5
    sv = deg_v ** -0.5
    diff = su[:, None] * Fu - sv[:, None] * Fv
    w = np.ones(B) if weights is None else np.asarray(weights, dtype=float)
    wdiff = w[:, None] * diff
    loss = mass / (2.0 * B) * float((wdiff * diff).sum())
    scale = mass / B
    return loss, scale * wdiff * su[:, None], -scale * wdiff * sv[:, None]


def batch_loss_l2(f_model, s, batch, degrees, mass=None, weights=None) -> float:
    """Mini-batch estimate of ``tr(F^T L_tilde F)`` over sampled pairs ``batch``."""
    u, v = (np.asarray(x) for x in batch)
    if u.size == 0:
        raise InputError("L2 batch is empty")
    mass = surrogate_mass(s) if mass is None else mass
    F = f_model(np.concatenate([u, v]))
    return l2_loss_and_grad(F[:u.size], F[u.size:], degrees[u], degrees[v], mass, weights)[0]


def _laplacian_quadratic(f_matrix, s, degrees, Q=None):
    """``F^T L_tilde F`` as a small dense matrix, without forming ``L_tilde``."""
    Q = s.Q() if Q is None else Q
    C = Q.T @ (f_matrix * (degrees ** -0.5)[:, None])
    return f_matrix.T @ f_matrix - C.T @ (s.gamma[:, None] * C)


def rayleigh_eigenvalues(f_matrix, s, degrees, Q=None):
    """Rayleigh quotients of the columns of ``f_matrix`` under ``L_tilde``.

    Returns ``(lambdas, order)``: the quotients sorted ascending and the
    column permutation that sorts them. Negative values are clamped to 0.
    """
    f_matrix = np.asarray(f_matrix, dtype=float)
    norms = (f_matrix * f_matrix).sum(axis=0)
    if np.any(norms == 0):
        raise InputError("zero column in embedding matrix")
    Q = s.Q() if Q is None else Q
    C = Q.T @ (f_matrix * (degrees ** -0.5)[:, None])
    num = norms - (s.gamma[:, None] * C * C).sum(axis=0)
    lam = num / norms
    if lam.min() < -1e-8:
        logger.debug("clamping negative Rayleigh quotient %.3e", lam.min())
    lam = np.maximum(lam, 0.0)
    order = np.argsort(lam, kind="stable")
    return lam[order], order


def _orthonormalize(F):
    Qf, R = np.linalg.qr(F)
    d = np.diag(R)
    keep = np.abs(d) > 1e-10 * max(np.abs(d).max(initial=0.0), 1e-300)
    return Qf[:, keep] * np.sign(d[keep])


def extract_eigenpairs(f_model, s, null_tol=NULL_TOL, degree_floor=DEGREE_FLOOR):
    """Orthonormalize the learned embedding and read off eigenpairs of ``L_tilde``.

    The columns of ``F`` are orthonormalized and rotated by the Rayleigh-Ritz
    procedure inside their span, so each column's Rayleigh quotient is a Ritz
    value. Directions with value below ``null_tol`` are discarded.
    """
    Q = s.Q()
    degrees = surrogate_degrees(s, Q=Q, floor=degree_floor)
    basis = _orthonormalize(f_model())
    if basis.shape[1] == 0:
        raise InputError("embedding has no independent column")
    M = _laplacian_quadratic(basis, s, degrees, Q=Q)
    _, W = np.linalg.eigh(0.5 * (M + M.T))
    basis = basis @ W
    lam, order = rayleigh_eigenvalues(basis, s, degrees, Q=Q)
    basis = basis[:, order]
    live = lam >= null_tol
    if not live.any():
        raise InputError("no non-null eigendirection in the embedding")
    lam, basis = lam[live], basis[:, live]
    norms = np.linalg.norm(basis, axis=1)
    zero = norms < 1e-12
    phis = np.zeros_like(basis)
    phis[~zero] = basis[~zero] / norms[~zero, None]
    return SpectralEigenpairs(lam, phis, basis=basis, zero_rows=zero)


def normalized_laplacian_dense(s, degree_floor=DEGREE_FLOOR):
    """Dense ``I - D^-1/2 A_tilde D^-1/2`` for small-n diagnostics."""
    A = s.dense()
    dinv = np.maximum(A.sum(axis=1), degree_floor) ** -0.5
    return np.eye(A.shape[0]) - dinv[:, None] * A * dinv[None, :]


def raw_basis_deviation(f_model) -> float:
    """``|F^T F - I|_F`` of the unprocessed embedding."""
    F = f_model()
    return float(np.linalg.norm(F.T @ F - np.eye(F.shape[1])))
