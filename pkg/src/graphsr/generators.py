"""Synthetic graphs and signals: SBMs, random geometric graphs, bandlimited signals, boundary masks.

Randomness comes from ``numpy.random.Generator`` seeded with ``PCG64`` so any
run replays exactly from its integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .graph import Graph, GraphError, check_signals, laplacian
from .numerics import sym_eigen


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class SbmSpec:
    block_sizes: tuple[int, ...]
    probabilities: tuple[tuple[float, ...], ...]
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(b) for b in self.block_sizes)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        k = len(sizes)
        if k == 0 or any(b <= 0 for b in sizes):
            raise ValueError("block sizes must be positive")
        if probs.shape != (k, k):
            raise ValueError(f"probability matrix must be {k}x{k}")
        if np.any(probs < 0) or np.any(probs > 1) or not np.allclose(probs, probs.T):
            raise ValueError("probabilities must be a symmetric matrix with entries in [0, 1]")
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "probabilities", tuple(tuple(float(p) for p in row) for row in probs))

    @property
    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.block_sizes)), self.block_sizes)

    def expected_mean_degree(self) -> float:
        sizes = np.asarray(self.block_sizes, dtype=float)
        p = np.asarray(self.probabilities)
        # a vertex in block b expects (n_b - 1) p_bb + sum_{c != b} n_c p_bc neighbours
        per_block = p @ sizes - np.diag(p)
        return float(per_block @ sizes / sizes.sum())


def two_block_spec(sizes: tuple[int, int], p_in: tuple[float, float], p_out: float, seed: int) -> SbmSpec:
    return SbmSpec(sizes, ((p_in[0], p_out), (p_out, p_in[1])), seed)


def sbm(spec: SbmSpec) -> Graph:
    """Stochastic block model with unit edge weights."""
    rng = make_rng(spec.seed)
    labels = spec.labels
    n = labels.size
    p = np.asarray(spec.probabilities)[labels[:, None], labels[None, :]]
    draws = rng.random((n, n))
    upper = np.triu(draws < p, 1)
    adjacency = (upper | upper.T).astype(np.float64)
    return Graph(adjacency)


def random_geometric(n: int, radius: float, seed: int) -> Graph:
    """Uniform points in the unit square joined when their distance is at most ``radius``."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    rng = make_rng(seed)
    pos = rng.random((n, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    adjacency = (dist <= radius).astype(np.float64)
    np.fill_diagonal(adjacency, 0.0)
    return Graph(adjacency, pos)


def is_connected(g: Graph) -> bool:
    if g.n == 0:
        return True
    count, _ = connected_components(sparse.csr_matrix(g.adjacency), directed=False)
    return count == 1


def connected_geometric(n: int, radius: float, seed: int, max_tries: int = 100) -> tuple[Graph, int]:
    """First connected :func:`random_geometric` draw over seeds ``seed, seed+1, ...``.

    Returns the graph and the seed that produced it.
    """
    for s in range(seed, seed + max_tries):
        g = random_geometric(n, radius, s)
        if is_connected(g):
            return g, s
    raise GraphError(f"no connected geometric graph in {max_tries} draws; increase the radius")


def geometric_radius_for_degree(n: int, mean_degree: float) -> float:
    """Radius giving roughly ``mean_degree`` neighbours, ignoring boundary losses."""
    return float(np.sqrt(mean_degree / (np.pi * max(n - 1, 1))))


def bandlimited_signals(g: Graph, k: int) -> np.ndarray:
    """The ``k`` Laplacian eigenvectors with smallest eigenvalues, as an ``(n, k)`` matrix."""
    if k > g.n:
        raise GraphError(f"bandwidth {k} exceeds vertex count {g.n}")
    key = ("laplacian_eig",)
    if key not in g._cache:
        g._cache[key] = sym_eigen(laplacian(g))
    return np.array(g._cache[key].vectors[:, :k])


def laplacian_eigen(g: Graph):
    bandlimited_signals(g, 0)
    return g._cache[("laplacian_eig",)]


def apply_boundary_mask(signals, mask) -> np.ndarray:
    x = np.asarray(signals, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64).ravel()
    if x.ndim == 1:
        x = x[:, None]
    if m.size != x.shape[0]:
        raise GraphError(f"mask has length {m.size}, signals have {x.shape[0]} rows")
    return m[:, None] * x


def random_line(seed: int) -> tuple[np.ndarray, float]:
    """A random line through the unit square as ``(unit normal, offset)``.

    The line passes through a uniform point of the central quarter of the
    square so both sides keep a sizeable share of vertices.
    """
    rng = make_rng(seed)
    angle = rng.uniform(0.0, np.pi)
    normal = np.array([np.cos(angle), np.sin(angle)])
    anchor = rng.uniform(0.25, 0.75, size=2)
    return normal, float(normal @ anchor)


def half_plane_mask(positions, normal, offset, inside: float = 1.0, outside: float = 0.0) -> np.ndarray:
    """``inside`` where ``normal . p >= offset`` and ``outside`` elsewhere."""
    side = np.asarray(positions) @ np.asarray(normal) >= offset
    return np.where(side, inside, outside).astype(np.float64)


def distance_to_line(positions, normal, offset) -> np.ndarray:
    return np.abs(np.asarray(positions) @ np.asarray(normal) - offset)


def boundary_vertices(g: Graph, mask) -> np.ndarray:
    """Vertices with at least one neighbour carrying a different mask value."""
    m = np.asarray(mask).ravel()
    differs = (m[:, None] != m[None, :]) & (g.adjacency > 0)
    return np.flatnonzero(differs.any(axis=1))


def piecewise_signals(g: Graph, k: int, seed: int, outside: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Bandlimited signals masked across a random line; returns ``(signals, mask)``."""
    if g.positions is None:
        raise GraphError("piecewise signals need vertex positions")
    normal, offset = random_line(seed)
    mask = half_plane_mask(g.positions, normal, offset, 1.0, outside)
    return apply_boundary_mask(bandlimited_signals(g, k), mask), mask


def community_features(labels, n_features: int, noise: float, seed: int) -> np.ndarray:
    """Noisy one-hot community indicators padded with pure-noise columns."""
    labels = np.asarray(labels, dtype=int)
    rng = make_rng(seed)
    c = int(labels.max()) + 1
    x = rng.normal(0.0, noise, size=(labels.size, max(n_features, c)))
    x[np.arange(labels.size), labels] += 1.0
    return x
