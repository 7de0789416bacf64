import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mwgp.errors import DimensionMismatch, FactorizationFailure
from mwgp.linalg import cholesky_with_jitter, jitter_schedule, log_det_from_chol, tri_solve


def leibniz_det(M):
    """Determinant by permutation expansion; only sensible for tiny matrices."""
    n = M.shape[0]
    total = 0.0
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for a in range(n) for b in range(a + 1, n) if perm[a] > perm[b])
        term = (-1.0) ** inversions
        for row, col in enumerate(perm):
            term *= M[row, col]
        total += term
    return total


def test_identity_needs_no_jitter():
    L, eps = cholesky_with_jitter(np.eye(2), 1e-6, return_jitter=True)
    assert eps == 0.0
    np.testing.assert_array_equal(L, np.eye(2))


def test_rank_one_requires_jitter():
    M = np.array([[1.0, 1.0], [1.0, 1.0]])
    L, eps = cholesky_with_jitter(M, 1e-6, return_jitter=True)
    assert eps > 0
    assert eps in jitter_schedule(M, 1e-6)
    diff = L @ L.T - M
    np.testing.assert_allclose(diff, eps * np.eye(2), atol=1e-12)


def test_random_psd_recovered(rng):
    G = rng.normal(size=(5, 5))
    M = G @ G.T
    L = cholesky_with_jitter(M)
    assert np.max(np.abs(L @ L.T - M)) < 1e-10
    assert np.allclose(L, np.tril(L))


def test_indefinite_raises():
    M = np.array([[1.0, 0.0], [0.0, -5.0]])
    with pytest.raises(FactorizationFailure):
        cholesky_with_jitter(M, 1e-6)


def test_non_square_and_asymmetric_rejected():
    with pytest.raises(DimensionMismatch):
        cholesky_with_jitter(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        cholesky_with_jitter(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_tri_solve_examples(rng):
    B = rng.normal(size=(3, 2))
    np.testing.assert_array_equal(tri_solve(np.eye(3), B), B)
    L = np.array([[2.0, 0.0], [1.0, 1.0]])
    np.testing.assert_allclose(tri_solve(L, np.array([[2.0], [2.0]])), [[1.0], [1.0]])
    np.testing.assert_allclose(L.T @ tri_solve(L, B[:2], transpose=True), B[:2], atol=1e-12)
    with pytest.raises(DimensionMismatch):
        tri_solve(L, B)


def test_log_det_examples():
    assert log_det_from_chol(np.eye(4)) == 0.0
    L = np.diag([np.sqrt(2.0), np.sqrt(3.0)])
    assert log_det_from_chol(L) == pytest.approx(np.log(6.0), abs=1e-12)
    assert log_det_from_chol(L) == pytest.approx(1.791759, abs=1e-6)


def test_log_det_matches_brute_force_3x3(rng):
    G = rng.normal(size=(3, 3))
    M = G @ G.T + 0.1 * np.eye(3)
    L = cholesky_with_jitter(M)
    assert log_det_from_chol(L) == pytest.approx(np.log(leibniz_det(M)), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_factor_and_log_det_properties(dim, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(dim, dim))
    M = G @ G.T + 1e-3 * np.eye(dim)
    L, eps = cholesky_with_jitter(M, return_jitter=True)
    assert np.max(np.abs(L @ L.T - (M + eps * np.eye(dim)))) < 1e-8 * np.max(np.abs(M))
    assert np.all(np.diag(L) > 0)
    expected = np.log(leibniz_det(M + eps * np.eye(dim)))
    assert log_det_from_chol(L) == pytest.approx(expected, rel=1e-8, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2**31 - 1))
def test_tri_solve_round_trip(dim, seed):
    rng = np.random.default_rng(seed)
    L = np.tril(rng.normal(size=(dim, dim)), -1) * (0.3 / np.sqrt(dim)) + np.diag(rng.uniform(1.0, 2.0, dim))
    X = rng.normal(size=(dim, 3))
    assert np.max(np.abs(tri_solve(L, L @ X) - X)) < 1e-9
    assert np.max(np.abs(tri_solve(L, L.T @ X, transpose=True) - X)) < 1e-9
