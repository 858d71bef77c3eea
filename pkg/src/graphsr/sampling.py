"""Non-trainable vertex samplers: uniform random, bandlimited-space (BLS) and spectral proxy (SP)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh

from .generators import bandlimited_signals, make_rng
from .graph import Graph, SamplingPlan, laplacian


class SamplingError(ValueError):
    pass


def _check_budget(n: int, m: int):
    if m < 0 or m > n:
        raise SamplingError(f"cannot select {m} vertices from {n}")


def random_sample(n: int, m: int, seed: int) -> SamplingPlan:
    _check_budget(n, m)
    rng = make_rng(seed)
    idx = rng.permutation(n)[:m]
    return SamplingPlan(tuple(int(i) for i in idx), np.ones(n))


def argmax_lowest(values, rtol: float = 1e-9) -> int:
    """Index of the maximum; values within ``rtol`` of it count as ties and go to the lowest index."""
    v = np.asarray(values, dtype=np.float64)
    top = float(v.max())
    return int(np.flatnonzero(v >= top - rtol * max(abs(top), 1.0))[0])


def sigma_min_rows(basis: np.ndarray, rows) -> float:
    """Smallest singular value of ``basis`` restricted to ``rows``."""
    rows = list(rows)
    if not rows:
        return 0.0
    return float(np.linalg.svd(basis[rows], compute_uv=False)[-1])


def bls_greedy(basis: np.ndarray, m: int) -> tuple[list[int], list[float]]:
    """Greedy row selection maximizing the smallest singular value.

    Returns the selected rows and the objective after each step. Ties go to
    the lowest row index.
    """
    n = basis.shape[0]
    chosen: list[int] = []
    trace: list[float] = []
    available = np.ones(n, dtype=bool)
    for _ in range(m):
        cand = np.flatnonzero(available)
        stack = np.concatenate(
            [np.broadcast_to(basis[chosen], (cand.size, len(chosen), basis.shape[1])),
             basis[cand][:, None, :]], axis=1)
        sv = np.linalg.svd(stack, compute_uv=False)[:, -1]
        best = argmax_lowest(sv)
        chosen.append(int(cand[best]))
        trace.append(float(sv[best]))
        available[cand[best]] = False
    return chosen, trace


def bls_sample(g: Graph, k: int, m: int) -> SamplingPlan:
    """Greedy bandlimited-space sampling on the first ``k`` Laplacian eigenvectors."""
    _check_budget(g.n, m)
    if k > m:
        raise SamplingError(f"bandwidth {k} exceeds budget {m}: bandlimited recovery is underdetermined")
    chosen, _ = bls_greedy(bandlimited_signals(g, k), m)
    return SamplingPlan(tuple(chosen), np.ones(g.n))


def spectral_proxy_matrix(g: Graph, k: int) -> np.ndarray:
    """``L^(2k)`` by repeated squaring, rescaled by ``lambda_max(L)^(2k)``.

    The rescaling keeps entries bounded and does not change eigenvectors.
    """
    lap = laplacian(g)
    scale = max(2.0 * float(g.degrees.max()), 1.0)  # Gershgorin bound on lambda_max
    base = lap / scale
    result = np.eye(g.n)
    power = base
    e = 2 * k
    while e:
        if e & 1:
            result = result @ power
        e >>= 1
        if e:
            power = power @ power
    return 0.5 * (result + result.T)


def spectral_proxy_greedy(proxy: np.ndarray, m: int) -> list[int]:
    n = proxy.shape[0]
    chosen: list[int] = []
    rest = list(range(n))
    for _ in range(m):
        sub = proxy[np.ix_(rest, rest)]
        _, vec = eigh(sub, subset_by_index=[0, 0])
        score = vec[:, 0] ** 2
        best = argmax_lowest(score)
        chosen.append(rest.pop(best))
    return chosen


def spectral_proxy_sample(g: Graph, k: int, m: int) -> SamplingPlan:
    """Spectral-proxy greedy sampling of order ``k``.

    At each step take the eigenvector of the smallest eigenvalue of ``L^(2k)``
    restricted to the unselected vertices and add the vertex where it has the
    largest squared entry.
    """
    if k < 1:
        raise SamplingError("proxy order must be >= 1")
    _check_budget(g.n, m)
    chosen = spectral_proxy_greedy(spectral_proxy_matrix(g, k), m)
    return SamplingPlan(tuple(chosen), np.ones(g.n))
