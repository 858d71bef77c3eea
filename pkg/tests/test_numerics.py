import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from graphsr.numerics import (
    LinAlgShapeError,
    SolverError,
    SymmetryError,
    jacobi_eigen,
    solve_spd,
    spectral_norm,
    sym_eigen,
)


def random_symmetric(rng, n):
    m = rng.standard_normal((n, n))
    return m + m.T


def test_identity_eigenvalues():
    dec = sym_eigen(np.eye(3))
    assert_allclose(dec.values, [1, 1, 1])
    assert_allclose(dec.vectors @ np.diag(dec.values) @ dec.vectors.T, np.eye(3), atol=1e-12)


def test_swap_matrix_eigenvalues():
    assert_allclose(sym_eigen([[0.0, 1.0], [1.0, 0.0]]).values, [-1.0, 1.0], atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_random_reconstruction_and_orthonormality(rng, method):
    m = random_symmetric(rng, 8)
    dec = sym_eigen(m, method=method)
    u, lam = dec.vectors, dec.values
    assert np.linalg.norm(u @ np.diag(lam) @ u.T - m) <= 1e-8
    assert np.linalg.norm(u.T @ u - np.eye(8)) <= 1e-8
    assert np.all(np.diff(lam) >= 0)


def test_jacobi_agrees_with_lapack(rng):
    for n in (2, 5, 12, 30):
        m = random_symmetric(rng, n)
        a, b = jacobi_eigen(m), sym_eigen(m)
        assert_allclose(a.values, b.values, atol=1e-10)
        # distinct eigenvalues: canonical signs make the vectors match exactly
        assert_allclose(a.vectors, b.vectors, atol=1e-7)


def test_sign_convention_first_component_positive(rng):
    vecs = sym_eigen(random_symmetric(rng, 6)).vectors
    for col in vecs.T:
        first = col[np.flatnonzero(np.abs(col) > 1e-10)[0]]
        assert first > 0


def test_eigen_rejects_bad_input():
    with pytest.raises(LinAlgShapeError):
        sym_eigen(np.ones((2, 3)))
    with pytest.raises(SymmetryError):
        sym_eigen([[0.0, 1.0], [2.0, 0.0]])


def test_solve_identity_and_scalar(rng):
    b = rng.standard_normal((4, 2))
    assert_allclose(solve_spd(np.eye(4), b), b)
    v = rng.standard_normal(4)
    assert_allclose(solve_spd(2 * np.eye(4), v), v / 2)


def test_solve_residual(rng):
    m = rng.standard_normal((10, 10))
    a = m.T @ m + np.eye(10)
    b = rng.standard_normal((10, 3))
    x = solve_spd(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-8 * (1 + np.linalg.norm(b))


def test_solve_names_failing_pivot():
    a = np.diag([1.0, 2.0, -1.0, 4.0])
    with pytest.raises(SolverError, match="pivot 3") as info:
        solve_spd(a, np.ones(4))
    assert info.value.pivot == 3


def test_spectral_norm_cases(rng):
    assert spectral_norm(np.eye(5)) == pytest.approx(1.0)
    assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    m = random_symmetric(rng, 9)
    assert spectral_norm(m) == pytest.approx(np.max(np.abs(sym_eigen(m).values)), abs=1e-8)
    with pytest.raises(SymmetryError):
        spectral_norm([[1.0, 2.0], [0.0, 1.0]])


def test_spectral_norm_equals_frobenius_on_rank_one(rng):
    v = rng.standard_normal(6)
    m = np.outer(v, v)
    assert spectral_norm(m) == pytest.approx(np.linalg.norm(m), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 20), seed=st.integers(0, 2**32 - 1))
def test_spectral_norm_below_frobenius(n, seed):
    m = random_symmetric(np.random.default_rng(seed), n)
    assert spectral_norm(m) <= np.linalg.norm(m) + 1e-12


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 64), seed=st.integers(0, 2**32 - 1))
def test_solve_spd_round_trip(n, seed):
    r = np.random.default_rng(seed)
    m = r.standard_normal((n, n))
    a = m @ m.T + n * np.eye(n)
    b = r.standard_normal(n)
    x = solve_spd(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b) + 1e-300
