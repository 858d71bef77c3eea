"""Dense linear-algebra kernels.

Everything here works on plain float64 ``numpy`` arrays. Eigendecompositions
come back with a fixed ordering and sign convention so that anything built on
eigenvectors downstream (bandlimited signals, BLS sampling) is reproducible.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack

SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12


class LinAlgShapeError(ValueError):
    """Raised for non-square or otherwise mis-shaped matrix input."""


class SymmetryError(ValueError):
    """Raised when a matrix that must be symmetric is not."""


class SolverError(ArithmeticError):
    """Raised when a factorization breaks down."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class EigenDecomposition(NamedTuple):
    values: np.ndarray   # ascending
    vectors: np.ndarray  # orthonormal columns


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise LinAlgShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_symmetric(m, tol: float = SYMMETRY_TOL, name: str = "matrix") -> np.ndarray:
    arr = as_matrix(m, name)
    if arr.shape[0] != arr.shape[1]:
        raise LinAlgShapeError(f"{name} must be square, got shape {arr.shape}")
    scale = max(1.0, float(np.max(np.abs(arr)))) if arr.size else 1.0
    if arr.size and np.max(np.abs(arr - arr.T)) > tol * scale:
        raise SymmetryError(f"{name} is not symmetric within {tol:g}")
    return arr


def canonical_signs(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Flip columns so the first component with magnitude above ``tol`` is positive."""
    out = np.array(vectors, dtype=np.float64, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def jacobi_eigen(m, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> EigenDecomposition:
    """Cyclic Jacobi eigensolver.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
    drops below ``tol`` times the matrix norm. Cost is O(n^3) per sweep in pure
    Python loops over pairs, so use it for small matrices.
    """
    a = check_symmetric(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    norm = max(np.linalg.norm(a), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise SolverError(f"Jacobi did not converge in {max_sweeps} sweeps")
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return EigenDecomposition(values[order], canonical_signs(v[:, order]))


def sym_eigen(m, method: str = "lapack") -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    ``method="lapack"`` calls the deterministic LAPACK driver behind
    ``numpy.linalg.eigh``; ``method="jacobi"`` uses :func:`jacobi_eigen`.
    Either way each eigenvector is sign-normalized so its first non-negligible
    component is positive.
    """
    arr = check_symmetric(m)
    if method == "jacobi":
        return jacobi_eigen(arr)
    if method != "lapack":
        raise ValueError(f"unknown eigen method {method!r}")
    sym = 0.5 * (arr + arr.T)
    values, vectors = np.linalg.eigh(sym)
    return EigenDecomposition(values, canonical_signs(vectors))


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive-definite ``a`` by Cholesky.

    Raises :class:`SolverError` carrying the 1-based index of the first
    non-positive pivot when the factorization fails.
    """
    a = check_symmetric(a, name="a")
    b_arr = np.asarray(b, dtype=np.float64)
    vector = b_arr.ndim == 1
    rhs = b_arr.reshape(-1, 1) if vector else b_arr
    if rhs.shape[0] != a.shape[0]:
        raise LinAlgShapeError(f"rhs has {rhs.shape[0]} rows, matrix is {a.shape}")
    if a.shape[0] == 0:
        return b_arr.copy()
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise SolverError(
            f"matrix is not positive definite: pivot {info} is non-positive", pivot=int(info))
    if info < 0:
        raise SolverError(f"dpotrf argument {-info} invalid")
    x, info = lapack.dpotrs(c, rhs, lower=1)
    if info != 0:
        raise SolverError(f"dpotrs failed with info={info}")
    return x.ravel() if vector else x


def spectral_norm(m) -> float:
    """Largest absolute eigenvalue of a symmetric matrix (2-norm via SVD)."""
    arr = check_symmetric(m)
    if arr.size == 0:
        return 0.0
    return float(np.linalg.norm(arr, 2))
