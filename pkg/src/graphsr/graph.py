"""Graph and signal containers, neighborhoods, sampling operators and polynomial filters.

Graphs are undirected with nonnegative weights and no self-loops. Vertex ids
are 0-based. Signals are plain ``(n, l)`` float arrays whose columns are
individual graph signals and whose rows are per-vertex feature vectors.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .numerics import LinAlgShapeError

UNREACHABLE = np.inf
SHIFT_MODES = ("none", "symmetric", "row_stochastic")


class GraphError(ValueError):
    """Invalid graph construction or graph/signal mismatch."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph stored as a dense adjacency matrix.

    ``positions`` is optional vertex geometry kept for plotting. Derived
    quantities (normalized shifts, their powers) are memoized per instance;
    the adjacency array is read-only so the cache never goes stale.
    """

    adjacency: np.ndarray
    positions: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GraphError("adjacency has non-finite entries")
        if np.any(a < 0):
            raise GraphError("adjacency has negative weights")
        if np.any(np.diag(a) != 0):
            raise GraphError("adjacency has self-loops")
        if not np.array_equal(a, a.T):
            raise GraphError("adjacency is not symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.positions is not None:
            pos = np.array(self.positions, dtype=np.float64, copy=True)
            if pos.shape[0] != a.shape[0]:
                raise GraphError("positions row count does not match vertex count")
            pos.setflags(write=False)
            object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edges(self) -> list[tuple[int, int, float]]:
        iu, ju = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(i), int(j), float(self.adjacency[i, j])) for i, j in zip(iu, ju)]

    def shift(self, mode: str = "symmetric") -> np.ndarray:
        key = ("shift", mode)
        if key not in self._cache:
            s = normalize_adjacency(self, mode)
            s.setflags(write=False)
            self._cache[key] = s
        return self._cache[key]

    def shift_powers(self, order: int, mode: str = "symmetric") -> list[np.ndarray]:
        """``[shift^0, ..., shift^order]`` as dense matrices (memoized)."""
        key = ("powers", mode)
        powers = self._cache.setdefault(key, [np.eye(self.n)])
        s = self.shift(mode)
        while len(powers) <= order:
            p = powers[-1] @ s
            p.setflags(write=False)
            powers.append(p)
        return powers[: order + 1]

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Graph whose vertex ``i`` is this graph's vertex ``perm[i]``."""
        p = np.asarray(perm, dtype=int)
        pos = None if self.positions is None else self.positions[p]
        return Graph(self.adjacency[np.ix_(p, p)], pos)


@dataclass(frozen=True)
class Neighborhood:
    anchor: int
    members: tuple[int, ...]
    sub_adjacency: np.ndarray
    features: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Ordered selected vertices (the sampling operator) plus per-vertex attention."""

    indices: tuple[int, ...]
    attention: np.ndarray

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        att = np.array(self.attention, dtype=np.float64, copy=True).ravel()
        if len(set(idx)) != len(idx):
            raise GraphError("sampling indices must be distinct")
        if any(i < 0 or i >= att.size for i in idx):
            raise GraphError(f"sampling index out of range for n={att.size}")
        if np.any(~np.isfinite(att)) or np.any(att < 0) or np.any(att > 1):
            raise GraphError("attention entries must lie in [0, 1]")
        att.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "attention", att)

    @classmethod
    def uniform(cls, indices: Iterable[int], n: int) -> "SamplingPlan":
        return cls(tuple(indices), np.ones(n))

    @property
    def n(self) -> int:
        return self.attention.size

    @property
    def m(self) -> int:
        return len(self.indices)

    @property
    def complement(self) -> tuple[int, ...]:
        chosen = set(self.indices)
        return tuple(i for i in range(self.n) if i not in chosen)

    def operator(self) -> np.ndarray:
        """The ``(m, n)`` 0/1 selection matrix."""
        psi = np.zeros((self.m, self.n))
        psi[np.arange(self.m), list(self.indices)] = 1.0
        return psi


@dataclass(frozen=True)
class FilterSpec:
    """Polynomial graph filter ``sum_l coefficients[l] * shift^l``."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in np.ravel(self.coefficients))
        if not c:
            raise ValueError("filter needs at least one coefficient")
        if not all(np.isfinite(c)):
            raise ValueError("filter coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def matrix(self, shift: np.ndarray) -> np.ndarray:
        """Dense ``h(shift)`` by Horner's rule."""
        n = shift.shape[0]
        out = self.coefficients[-1] * np.eye(n)
        for c in reversed(self.coefficients[:-1]):
            out = out @ shift + c * np.eye(n)
        return out


HAAR = FilterSpec((1.0, -1.0))


def build_graph(n: int, edges: Iterable[tuple[int, int, float]] = (), positions=None) -> Graph:
    adjacency = np.zeros((n, n))
    seen = set()
    for u, v, w in edges:
        u, v, w = int(u), int(v), float(w)
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise GraphError(f"self-loop at vertex {u}")
        if not (w > 0 and np.isfinite(w)):
            raise GraphError(f"edge ({u}, {v}) has non-positive weight {w}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphError(f"duplicate edge {key}")
        seen.add(key)
        adjacency[u, v] = adjacency[v, u] = w
    return Graph(adjacency, positions)


def normalize_adjacency(g: Graph, mode: str = "symmetric") -> np.ndarray:
    """``D^-1/2 A D^-1/2`` (symmetric), ``D^-1 A`` (row_stochastic) or ``A`` (none).

    Isolated vertices get all-zero rows and columns rather than a division by zero.
    """
    a = np.array(g.adjacency)
    if mode == "none":
        return a
    deg = a.sum(axis=1)
    inv = np.zeros_like(deg)
    nz = deg > 0
    if mode == "symmetric":
        inv[nz] = 1.0 / np.sqrt(deg[nz])
        return inv[:, None] * a * inv[None, :]
    if mode == "row_stochastic":
        inv[nz] = 1.0 / deg[nz]
        return inv[:, None] * a
    raise ValueError(f"unknown normalization mode {mode!r}; expected one of {SHIFT_MODES}")


def laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian ``D - A``."""
    return np.diag(g.degrees) - g.adjacency


def hop_distances(g: Graph, v: int) -> np.ndarray:
    """BFS hop counts from ``v`` over positive-weight edges; ``inf`` when unreachable."""
    if not 0 <= v < g.n:
        raise GraphError(f"vertex {v} out of range for n={g.n}")
    dist = np.full(g.n, UNREACHABLE)
    dist[v] = 0
    nbrs = [np.flatnonzero(row > 0) for row in g.adjacency]
    queue = deque([v])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if dist[w] == UNREACHABLE:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def neighborhood(g: Graph, signals, v: int, radius: int) -> Neighborhood:
    """Vertices within ``radius`` hops of ``v`` with their induced subgraph and features."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    d = hop_distances(g, v)
    members = tuple(int(i) for i in np.flatnonzero(d <= radius))
    sub = g.adjacency[np.ix_(members, members)].copy()
    feats = None
    if signals is not None:
        x = check_signals(g, signals)
        feats = x[list(members)]
    return Neighborhood(v, members, sub, feats)


def check_signals(g: Graph, signals) -> np.ndarray:
    x = np.asarray(signals, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != g.n:
        raise GraphError(f"signals have shape {x.shape}, graph has {g.n} vertices")
    if not np.all(np.isfinite(x)):
        raise GraphError("signals have non-finite entries")
    return x


def apply_sampling(plan: SamplingPlan, x) -> np.ndarray:
    """Weighted measurements ``y = Psi (a * x)``; works on vectors or ``(n, l)`` matrices."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != plan.n:
        raise LinAlgShapeError(f"signal has length {x.shape[0]}, plan expects {plan.n}")
    idx = list(plan.indices)
    att = plan.attention[idx]
    return att * x[idx] if x.ndim == 1 else att[:, None] * x[idx]


def apply_filter(h: FilterSpec, g: Graph, shift, x) -> np.ndarray:
    """``sum_l h_l shift^l x`` via repeated matrix-vector products."""
    s = np.asarray(shift, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if s.shape != (g.n, g.n):
        raise LinAlgShapeError(f"shift has shape {s.shape}, expected {(g.n, g.n)}")
    if x.shape[0] != g.n:
        raise LinAlgShapeError(f"signal has length {x.shape[0]}, expected {g.n}")
    term = x
    out = h.coefficients[0] * term
    for c in h.coefficients[1:]:
        term = s @ term
        out = out + c * term
    return out
