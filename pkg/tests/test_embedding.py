import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import free_surrogate, nonnegative_surrogate
from graphbo.completion import MixtureSampler, NodeRepresentationModel
from graphbo.embedding import (SpectralEigenpairs, batch_loss_l2, extract_eigenpairs,
                               normalized_laplacian_dense, rayleigh_eigenvalues,
                               surrogate_degrees, surrogate_mass)
from graphbo.errors import InputError


def all_pairs(n):
    u, v = np.divmod(np.arange(n * n), n)
    return u, v


# degrees

def test_degrees_zero_gamma_hit_floor():
    s = free_surrogate(np.ones((5, 2)), [0.0, 0.0])
    assert np.array_equal(surrogate_degrees(s), np.full(5, 1e-6))


def test_degrees_rank_one_uniform():
    s = free_surrogate(np.full((6, 1), 0.4), [2.0])
    d = surrogate_degrees(s)
    assert np.allclose(d, d[0], rtol=0, atol=1e-15)


def test_degrees_and_mass_match_dense_sums(rng):
    s = free_surrogate(rng.standard_normal((8, 3)), rng.standard_normal(3))
    A = s.dense()
    assert np.abs(surrogate_degrees(s, raw=True) - A.sum(axis=1)).max() <= 1e-12
    assert abs(surrogate_mass(s) - A.sum()) <= 1e-12


# smoothness loss

def test_l2_trivial_cases():
    s = free_surrogate(np.full((5, 1), 0.5), [1.0])
    F = NodeRepresentationModel(np.ones((5, 3)), [])
    deg = surrogate_degrees(s)
    u, v = all_pairs(5)
    assert batch_loss_l2(F, s, (u, v), deg) == pytest.approx(0.0, abs=1e-15)
    G = NodeRepresentationModel(np.arange(10.0).reshape(5, 2), [])
    assert batch_loss_l2(G, s, ([2], [2]), deg) == 0.0
    with pytest.raises(InputError):
        batch_loss_l2(G, s, ([], []), deg)


def test_l2_expectation_equals_trace_nonnegative_surrogate():
    # nonnegative factors whose columns share one L1 norm: only then is the
    # mixture pmf exactly A_tilde / mass
    base = nonnegative_surrogate(10, 3, 2, seed=0)
    Q = base.Q() / base.Q().sum(axis=0)
    s = free_surrogate(Q, base.gamma, base.F())
    deg = surrogate_degrees(s)
    u, v = all_pairs(10)
    pmf = MixtureSampler(s.gamma, s.Q()).pmf(u, v)
    assert np.allclose(pmf, s.dense().ravel() / surrogate_mass(s), rtol=0, atol=1e-15)
    per_pair = np.array([batch_loss_l2(s.f_model, s, ([a], [b]), deg) for a, b in zip(u, v)])
    F = s.F()
    oracle = np.trace(F.T @ normalized_laplacian_dense(s) @ F)
    assert abs(pmf @ per_pair - oracle) <= 1e-10


def test_mixture_pmf_biased_for_unequal_column_norms():
    s = nonnegative_surrogate(10, 3, 2, seed=0)
    u, v = all_pairs(10)
    pmf = MixtureSampler(s.gamma, s.Q()).pmf(u, v)
    assert np.abs(pmf - s.dense().ravel() / surrogate_mass(s)).max() > 1e-4


def test_l2_importance_weights_remove_bias_for_signed_surrogate():
    rng = np.random.default_rng(4)
    Q = np.abs(rng.standard_normal((10, 3))) + 0.2
    Q[:, 2] *= np.where(np.arange(10) % 2, 1.0, -1.0)
    s = free_surrogate(Q, [2.0, 1.5, 0.1], rng.standard_normal((10, 2)))
    A = s.dense()
    assert A.min() > 0
    mass = surrogate_mass(s)
    deg = surrogate_degrees(s)
    u, v = all_pairs(10)
    pmf = MixtureSampler(s.gamma, s.Q()).pmf(u, v)
    w = np.maximum(A.ravel(), 0) / (mass * pmf)
    per_pair = np.array([batch_loss_l2(s.f_model, s, ([a], [b]), deg, weights=[wk])
                         for a, b, wk in zip(u, v, w)])
    F = s.F()
    oracle = np.trace(F.T @ normalized_laplacian_dense(s) @ F)
    assert abs(pmf @ per_pair - oracle) <= 1e-10
    unweighted = np.array([batch_loss_l2(s.f_model, s, ([a], [b]), deg) for a, b in zip(u, v)])
    assert abs(pmf @ unweighted - oracle) > 1e-3


# Rayleigh quotients

def test_rayleigh_exact_eigenvector():
    s = nonnegative_surrogate(20, 4, 2, seed=1)
    L = normalized_laplacian_dense(s)
    w, V = np.linalg.eigh(L)
    lam, order = rayleigh_eigenvalues(V[:, [5, 2]], s, surrogate_degrees(s))
    assert np.allclose(lam, [w[2], w[5]], atol=1e-10)
    assert order.tolist() == [1, 0]


def test_rayleigh_complete_graph_null_vector():
    n = 7
    s = free_surrogate(np.full((n, 1), 1 / np.sqrt(n)), [float(n)])
    deg = surrogate_degrees(s)
    lam, _ = rayleigh_eigenvalues(np.sqrt(deg)[:, None], s, deg)
    assert lam[0] == pytest.approx(0.0, abs=1e-12)


def test_rayleigh_zero_column():
    s = nonnegative_surrogate(5, 2, 2, seed=0)
    with pytest.raises(InputError):
        rayleigh_eigenvalues(np.zeros((5, 1)), s, surrogate_degrees(s))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 25))
def test_rayleigh_in_normalized_range(seed, n):
    s = nonnegative_surrogate(n, 3, 2, seed=seed)
    f = np.random.default_rng(seed).standard_normal((n, 4))
    lam, _ = rayleigh_eigenvalues(f, s, surrogate_degrees(s))
    assert lam.min() >= 0 and lam.max() <= 2 + 1e-8


# extraction

def test_extract_drops_null_space_of_two_blocks():
    Q = np.zeros((8, 2))
    Q[:4, 0] = Q[4:, 1] = 0.5
    F = np.random.default_rng(0).standard_normal((8, 8))
    s = free_surrogate(Q, [4.0, 4.0], F)
    L = normalized_laplacian_dense(s)
    assert np.sum(np.linalg.eigvalsh(L) < 1e-6) == 2
    e = extract_eigenpairs(s.f_model, s)
    assert e.dim == 6
    assert e.lambdas.min() >= 1e-6


def test_extract_outputs_orthonormal_unit_rows():
    s = nonnegative_surrogate(15, 3, 4, seed=2)
    e = extract_eigenpairs(s.f_model, s)
    assert np.linalg.norm(e.basis.T @ e.basis - np.eye(e.dim)) <= 1e-10
    assert np.all(np.diff(e.lambdas) >= 0)
    norms = np.linalg.norm(e.phis, axis=1)
    assert np.allclose(norms[~e.zero_rows], 1.0)
    again = extract_eigenpairs(s.f_model, s)
    assert np.array_equal(again.lambdas, e.lambdas) and np.array_equal(again.phis, e.phis)


def test_extract_exact_eigenspace_recovers_eigenvalues():
    s = nonnegative_surrogate(30, 3, 1, seed=3)
    w, V = np.linalg.eigh(normalized_laplacian_dense(s))
    mixed = V[:, :6] @ np.random.default_rng(1).standard_normal((6, 6))
    f = NodeRepresentationModel(mixed, [])
    e = extract_eigenpairs(f, s)
    assert np.allclose(e.lambdas, w[1:6], atol=1e-10)


def test_extract_fails_without_live_directions():
    n = 6
    s = free_surrogate(np.full((n, 1), 1.0), [1.0])
    deg = surrogate_degrees(s)
    with pytest.raises(InputError):
        extract_eigenpairs(NodeRepresentationModel(np.sqrt(deg)[:, None], []), s)


def test_eigenpairs_csv_roundtrip(tmp_path):
    e = SpectralEigenpairs(np.array([0.1, 0.5]), np.array([[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]]))
    e.to_csv(tmp_path / "eig.csv")
    back = SpectralEigenpairs.from_csv(tmp_path / "eig.csv")
    assert np.array_equal(back.lambdas, e.lambdas)
    assert np.array_equal(back.phis, e.phis)
