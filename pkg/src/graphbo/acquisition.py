"""Expected-improvement scoring and next-node selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import BudgetError, InputError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
FLUSH = 1e-300


def norm_cdf(z):
    return 0.5 * erfc(-np.asarray(z, dtype=float) / _SQRT2)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def expected_improvement(mu, sigma, y_star, convention="paper"):
    """EI of each candidate given the best observed value ``y_star``.

    ``convention="paper"`` scores ``(y* - mu) Phi(z) + sigma phi(z)`` with
    ``z = (y* - mu) / sigma``; ``convention="max"`` uses the improvement
    ``mu - y*`` appropriate for maximisation. ``sigma == 0`` scores 0.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise InputError("sigma must be nonnegative")
    if convention == "paper":
        gain = y_star - mu
    elif convention == "max":
        gain = mu - y_star
    else:
        raise InputError(f"unknown EI convention {convention!r}")
    live = sigma > 0
    safe = np.where(live, sigma, 1.0)
    z = gain / safe
    ei = gain * norm_cdf(z) + safe * norm_pdf(z)
    ei = np.where(live, np.maximum(ei, 0.0), 0.0)
    ei = np.where(ei < FLUSH, 0.0, ei)
    return float(ei) if ei.ndim == 0 else ei


@dataclass(frozen=True)
class AcquisitionResult:
    scores: np.ndarray
    chosen: int
    chosen_score: float


def select_next(gp, n=None, queried=(), convention="paper", exclude_queried=True):
    """Maximise EI over all nodes; ties go to the smallest index.

    With ``exclude_queried`` the nodes in ``queried`` are never returned.
    """
    n = gp.kernel.eigenpairs.n if n is None else n
    mu, sd = gp.predict(np.arange(n))
    y_star = float(np.max(gp.train_values))
    scores = expected_improvement(mu, sd, y_star, convention)
    allowed = np.ones(n, dtype=bool)
    if exclude_queried:
        allowed[np.asarray(list(queried), dtype=np.int64)] = False
    if not allowed.any():
        raise BudgetError("budget exceeds domain: every node has been queried")
    masked = np.where(allowed, scores, -np.inf)
    chosen = int(np.argmax(masked))
    return AcquisitionResult(scores, chosen, float(scores[chosen]))
