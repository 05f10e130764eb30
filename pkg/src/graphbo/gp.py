"""Gaussian-process regression over graph nodes with a spectral kernel.

The kernel is ``k(u, v) = sum_i r(lambda_i) phi_i(u) phi_i(v)`` where
``(lambda_i, phi_i)`` come from the surrogate Laplacian and ``r`` is a
spectral filter (polynomial, Matern-type or RBF-type).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .embedding import SpectralEigenpairs
from .errors import FactorizationError, InputError, ParameterError
from .optim import Adam

logger = logging.getLogger(__name__)

PSD_FLOOR = 1e-9
JITTER_LADDER = (1e-8, 1e-6, 1e-4)
LOG_2PI = np.log(2.0 * np.pi)

DEFAULT_PARAMS = {
    "polynomial": {"beta": (1.0, 0.0, 0.0), "eps": 1e-3},
    "matern": {"beta": 1.0, "nu": 2.5},
    "rbf": {"sigma_f": 1.0, "lengthscale": 1.0},
}


def filter_values(kind, params, lam):
    """Evaluate ``r(lambda)`` and its derivatives w.r.t. the free parameters.

    Returns ``(r, dr)`` where ``dr`` has one row per entry of
    :func:`free_params`. Values are clamped at ``PSD_FLOOR``; clamped
    entries get zero derivative.
    """
    lam = np.asarray(lam, dtype=float)
    if kind == "polynomial":
        beta = np.asarray(params["beta"], dtype=float)
        powers = lam[None, :] ** np.arange(beta.size)[:, None]
        poly = beta @ powers
        r = np.maximum(poly, 0.0) + params["eps"]
        dr = powers * (poly > 0)
    elif kind == "matern":
        beta, nu = float(params["beta"]), float(params["nu"])
        base = beta * nu + lam
        if np.any(base <= 0):
            raise ParameterError(f"matern filter needs beta*nu + lambda > 0 (beta={beta}, nu={nu})")
        r = base ** -nu
        d_logbeta = -nu * r * beta * nu / base
        d_lognu = nu * r * (-np.log(base) - nu * beta / base)
        dr = np.vstack([d_logbeta, d_lognu])
    elif kind == "rbf":
        sf, ell = float(params["sigma_f"]), float(params["lengthscale"])
        if sf <= 0 or ell <= 0:
            raise ParameterError("rbf filter needs positive sigma_f and lengthscale")
        r = sf**2 * np.exp(-lam / (2.0 * ell**2))
        dr = np.vstack([2.0 * r, r * lam / ell**2])
    else:
        raise InputError(f"unknown filter kind {kind!r}")
    clamped = r < PSD_FLOOR
    r = np.maximum(r, PSD_FLOOR)
    dr = np.where(clamped[None, :], 0.0, dr)
    return r, dr


def free_params(kind, params) -> np.ndarray:
    """Unconstrained vector: polynomial coefficients as-is, positive ones in log space."""
    if kind == "polynomial":
        return np.asarray(params["beta"], dtype=float).copy()
    if kind == "matern":
        return np.log([params["beta"], params["nu"]])
    if kind == "rbf":
        return np.log([params["sigma_f"], params["lengthscale"]])
    raise InputError(f"unknown filter kind {kind!r}")


def params_from_free(kind, theta, template) -> dict:
    theta = np.asarray(theta, dtype=float)
    if kind == "polynomial":
        return {"beta": tuple(theta), "eps": template["eps"]}
    if kind == "matern":
        return {"beta": float(np.exp(theta[0])), "nu": float(np.exp(theta[1]))}
    return {"sigma_f": float(np.exp(theta[0])), "lengthscale": float(np.exp(theta[1]))}


@dataclass
class SpectralKernel:
    filter_kind: str
    params: dict
    eigenpairs: SpectralEigenpairs

    def __post_init__(self):
        if self.filter_kind not in DEFAULT_PARAMS:
            raise InputError(f"unknown filter kind {self.filter_kind!r}")
        merged = dict(DEFAULT_PARAMS[self.filter_kind])
        merged.update(self.params or {})
        self.params = merged
        self.spectrum()

    @classmethod
    def default(cls, kind, eigenpairs):
        return cls(kind, dict(DEFAULT_PARAMS[kind]), eigenpairs)

    def spectrum(self) -> np.ndarray:
        return filter_values(self.filter_kind, self.params, self.eigenpairs.lambdas)[0]

    def __call__(self, u, v) -> float:
        phi = self.eigenpairs.phis
        return float(((phi[u] * phi[v]) * self.spectrum()).sum())

    def gram(self, rows, cols=None) -> np.ndarray:
        phi = self.eigenpairs.phis
        a = phi[np.asarray(rows)]
        b = a if cols is None else phi[np.asarray(cols)]
        return (a * self.spectrum()) @ b.T

    def diag(self, nodes=None) -> np.ndarray:
        phi = self.eigenpairs.phis if nodes is None else self.eigenpairs.phis[np.asarray(nodes)]
        return (phi * phi) @ self.spectrum()


def factorize(K, noise_var=0.0, jitter=0.0):
    """Lower Cholesky factor of ``K + (noise_var + jitter) I``.

    On failure the jitter climbs ``JITTER_LADDER``. Returns the factor and
    the jitter actually used.
    """
    m = K.shape[0]
    ladder = [jitter] + [j for j in JITTER_LADDER if j > jitter]
    for jit in ladder:
        try:
            L = cholesky(K + (noise_var + jit) * np.eye(m), lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            continue
        return L, jit
    raise FactorizationError(f"Cholesky failed with jitter up to {ladder[-1]:g}")


def gaussian_nll(K, y, noise_var=0.0, jitter=0.0) -> float:
    """Negative log marginal likelihood of ``y ~ N(0, K + noise_var I)``."""
    y = np.asarray(y, dtype=float)
    L, _ = factorize(np.asarray(K, dtype=float), noise_var, jitter)
    alpha = cho_solve((L, True), y)
    return float(0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * y.size * LOG_2PI)


@dataclass
class GPSurrogate:
    """GP posterior on the training nodes, factorized once at construction.

    Targets are standardized to zero mean and unit variance when
    ``standardize`` is set; predictions are returned on the original scale.
    """

    kernel: SpectralKernel
    train_nodes: np.ndarray
    train_values: np.ndarray
    noise_var: float = 1e-2
    jitter: float = 1e-8
    standardize: bool = True
    learn_noise: bool = True
    y_mean: float = field(init=False, default=0.0)
    y_std: float = field(init=False, default=1.0)

    def __post_init__(self):
        self.train_nodes = np.asarray(self.train_nodes, dtype=np.int64)
        self.train_values = np.asarray(self.train_values, dtype=float)
        if self.train_nodes.size != self.train_values.size or self.train_nodes.size == 0:
            raise InputError("need matching, non-empty training nodes and values")
        if self.noise_var < 0:
            raise InputError("noise variance must be nonnegative")
        if self.standardize:
            self.y_mean = float(self.train_values.mean())
            std = float(self.train_values.std())
            self.y_std = std if std > 1e-12 else 1.0
        self.refit()

    @property
    def y(self) -> np.ndarray:
        return (self.train_values - self.y_mean) / self.y_std

    def refit(self):
        K = self.kernel.gram(self.train_nodes)
        self.chol, self.used_jitter = factorize(K, self.noise_var, self.jitter)
        self.alpha = cho_solve((self.chol, True), self.y)
        return self

    def nll(self) -> float:
        y = self.y
        return float(0.5 * y @ self.alpha + np.log(np.diag(self.chol)).sum()
                     + 0.5 * y.size * LOG_2PI)

    def predict(self, nodes=None):
        """Posterior mean and standard deviation of the latent function."""
        nodes = np.arange(self.kernel.eigenpairs.n) if nodes is None else np.asarray(nodes)
        scalar = nodes.ndim == 0
        nodes = np.atleast_1d(nodes)
        Ks = self.kernel.gram(nodes, self.train_nodes)
        mu = Ks @ self.alpha
        V = solve_triangular(self.chol, Ks.T, lower=True)
        var = np.maximum(self.kernel.diag(nodes) - (V * V).sum(axis=0), 0.0)
        mu = mu * self.y_std + self.y_mean
        sd = np.sqrt(var) * self.y_std
        if scalar:
            return float(mu[0]), float(sd[0])
        return mu, sd

    def _nll_and_grad(self):
        """NLL and its gradient w.r.t. (free filter params, log noise)."""
        kern = self.kernel
        phi = kern.eigenpairs.phis[self.train_nodes]
        r, dr = filter_values(kern.filter_kind, kern.params, kern.eigenpairs.lambdas)
        m = self.train_nodes.size
        Kinv = cho_solve((self.chol, True), np.eye(m))
        W = Kinv - np.outer(self.alpha, self.alpha)
        proj = np.einsum("ui,uv,vi->i", phi, W, phi)
        g_filter = 0.5 * dr @ proj
        g_noise = 0.5 * self.noise_var * np.trace(W)
        return self.nll(), g_filter, g_noise


def fit_hyperparams(gp: GPSurrogate, lr=1e-2, steps=50) -> GPSurrogate:
    """Adam on the negative log marginal likelihood; keeps the best iterate.

    Filter parameters are optimised in the unconstrained space of
    :func:`free_params` and the noise variance in log space (when
    ``gp.learn_noise``). Returns ``gp`` refitted at the lowest NLL seen.
    """
    if gp.train_nodes.size < 2 and steps > 0:
        raise InputError("hyperparameter fitting needs at least two training points")
    kind = gp.kernel.filter_kind
    template = dict(gp.kernel.params)
    theta = free_params(kind, template)
    log_noise = np.log(max(gp.noise_var, 1e-8))
    nll = gp.nll()
    if not np.isfinite(nll):
        raise InputError("non-finite NLL at the initial hyperparameters")
    best = (nll, dict(gp.kernel.params), gp.noise_var)
    opt = Adam([theta.shape, ()])
    for _ in range(steps):
        _, g_theta, g_noise = gp._nll_and_grad()
        if not gp.learn_noise:
            g_noise = 0.0
        theta, log_noise = opt.step([theta, log_noise], [g_theta, g_noise], [lr, lr])
        try:
            gp.kernel.params = params_from_free(kind, theta, template)
            if gp.learn_noise:
                gp.noise_var = float(max(np.exp(log_noise), 1e-8))
            gp.refit()
            nll = gp.nll()
        except (FactorizationError, ParameterError):
            break
        if np.isfinite(nll) and nll < best[0]:
            best = (nll, dict(gp.kernel.params), gp.noise_var)
    gp.kernel.params, gp.noise_var = best[1], best[2]
    return gp.refit()
