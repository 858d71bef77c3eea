"""Mutual-information-driven vertex selection.

An affinity network scores how well a vertex's features express a
neighborhood's features::

    T(v, u) = S(E(s_v), P(q_u))
    P(q_u)  = 1/(R+1) * sum_{r=0..R} sum_nu (shift^r)[nu, u] * W_r E(s_nu)

Training maximizes a GAN-style lower bound on the mutual information between
vertices and their own neighborhoods, with negative sampling standing in for
mismatched pairs. The frozen network then defines the set criterion

    C(M) = mean_{v in M} log sig(T(v, v)) + mean_{v != u in M} log(1 - sig(T(v, u)))

which a greedy search maximizes one vertex at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .autodiff import Tensor
from .generators import make_rng
from .graph import Graph, SamplingPlan, check_signals


class SelectionError(ValueError):
    pass


@dataclass
class AffinityNet:
    """Parameters of the vertex embedder ``E``, per-hop mixers ``W_r`` and affinity head ``S``.

    Weight matrices act on row vectors (``x @ W``), so ``P.W{r}`` is the
    transpose of the per-hop matrix in column convention.
    """

    radius: int
    dim: int
    params: dict[str, Tensor]
    shift_mode: str = "symmetric"

    @classmethod
    def init(cls, n_features: int, dim: int = 32, radius: int = 1, seed: int = 0,
             shift_mode: str = "symmetric") -> "AffinityNet":
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        rng = make_rng(seed)
        p = {
            "E.W1": ad.glorot_uniform(rng, n_features, dim, "E.W1"),
            "E.b1": ad.zeros(1, dim, "E.b1"),
            "E.W2": ad.glorot_uniform(rng, dim, dim, "E.W2"),
            "E.b2": ad.zeros(1, dim, "E.b2"),
        }
        for r in range(radius + 1):
            p[f"P.W{r}"] = ad.glorot_uniform(rng, dim, dim, f"P.W{r}")
        p["S.W1"] = ad.glorot_uniform(rng, 2 * dim, dim, "S.W1")
        p["S.b1"] = ad.zeros(1, dim, "S.b1")
        p["S.W2"] = ad.glorot_uniform(rng, dim, 1, "S.W2")
        p["S.b2"] = ad.zeros(1, 1, "S.b2")
        return cls(radius, dim, p, shift_mode)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for k, t in self.params.items():
            t.value[...] = state[k]

    def copy(self) -> "AffinityNet":
        params = {k: Tensor(t.value, requires_grad=True, name=k) for k, t in self.params.items()}
        return AffinityNet(self.radius, self.dim, params, self.shift_mode)


# ---------------------------------------------------------------------------
# differentiable pieces


def vertex_embeddings(net: AffinityNet, x) -> Tensor:
    p = net.params
    h = ad.relu(ad.add(ad.as_tensor(x) @ p["E.W1"], p["E.b1"]))
    return ad.add(h @ p["E.W2"], p["E.b2"])


SPARSE_DENSITY = 0.25


def hop_operators(g: Graph, radius: int, mode: str = "symmetric") -> list:
    """``(shift^r)^T`` for ``r = 1..radius``, stored sparse when mostly zero (memoized)."""
    key = ("hop_operators", mode, radius)
    if key not in g._cache:
        ops = []
        for sr in g.shift_powers(radius, mode)[1:]:
            st = np.ascontiguousarray(sr.T)
            ops.append(sparse.csr_matrix(st) if np.count_nonzero(st) < SPARSE_DENSITY * st.size else st)
        g._cache[key] = ops
    return g._cache[key]


def neighborhood_embeddings(net: AffinityNet, g: Graph, ev: Tensor) -> Tensor:
    """``P(q_u)`` for every anchor ``u`` as the rows of an ``(n, d)`` tensor."""
    total = ev @ net.params["P.W0"]
    for r, op in enumerate(hop_operators(g, net.radius, net.shift_mode), start=1):
        total = total + ad.apply_linear(op, ev @ net.params[f"P.W{r}"])
    return ad.scale(total, 1.0 / (net.radius + 1))


def head(net: AffinityNet, ev_rows: Tensor, pu_rows: Tensor) -> Tensor:
    p = net.params
    hidden = ad.relu(ad.add(ad.concat_cols([ev_rows, pu_rows]) @ p["S.W1"], p["S.b1"]))
    return ad.add(hidden @ p["S.W2"], p["S.b2"])


@dataclass
class Embedded:
    """Vertex and neighborhood embeddings of one graph/signal pair."""

    ev: Tensor
    pu: Tensor

    def affinity(self, net: AffinityNet, v_idx, u_idx) -> Tensor:
        return head(net, ad.gather_rows(self.ev, v_idx), ad.gather_rows(self.pu, u_idx))


def embed(net: AffinityNet, g: Graph, signals) -> Embedded:
    x = check_signals(g, signals) if not isinstance(signals, Tensor) else signals
    ev = vertex_embeddings(net, x)
    return Embedded(ev, neighborhood_embeddings(net, g, ev))


def attention_tensor(net: AffinityNet, g: Graph, signals, emb: Embedded | None = None) -> Tensor:
    emb = emb or embed(net, g, signals)
    idx = np.arange(g.n)
    return ad.sigmoid(emb.affinity(net, idx, idx))


def mi_objective(net: AffinityNet, g: Graph, signals, vertex_set, negatives,
                 emb: Embedded | None = None) -> Tensor:
    """GAN-style mutual information estimate as a scalar tensor (always <= 0).

    ``negatives`` is a sequence of ``(v, u)`` pairs; an empty sequence drops
    the second term.
    """
    vs = np.asarray(list(vertex_set), dtype=np.intp)
    if vs.size == 0:
        raise SelectionError("mi_objective needs a nonempty vertex set")
    emb = emb or embed(net, g, signals)
    value = ad.mean(ad.log_sigmoid(emb.affinity(net, vs, vs)))
    neg = np.asarray(list(negatives), dtype=np.intp).reshape(-1, 2)
    if neg.shape[0]:
        t_neg = emb.affinity(net, neg[:, 0], neg[:, 1])
        value = value + ad.mean(ad.log_sigmoid(-t_neg))
    return value


def sample_negatives(rng: np.random.Generator, vertex_set, per_vertex: int) -> np.ndarray:
    """``per_vertex`` pairs ``(v, u)`` for each ``v`` with ``u`` uniform over the set minus ``v``."""
    vs = np.asarray(list(vertex_set), dtype=np.intp)
    m = vs.size
    if per_vertex <= 0 or m < 2:
        return np.zeros((0, 2), dtype=np.intp)
    pos = np.repeat(np.arange(m), per_vertex)
    other = rng.integers(0, m - 1, size=pos.size)
    other = other + (other >= pos)
    return np.stack([vs[pos], vs[other]], axis=1)


# ---------------------------------------------------------------------------
# training


@dataclass
class SamplerTrainConfig:
    epochs: int = 200
    lr: float = 0.01
    negatives_per_vertex: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.negatives_per_vertex < 0:
            raise ValueError("negatives_per_vertex must be >= 0")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")


def train_affinity(net: AffinityNet, g: Graph, signals, cfg: SamplerTrainConfig = SamplerTrainConfig()
                   ) -> tuple[AffinityNet, list[float]]:
    """Maximize the mutual information estimate over all vertices with Adam.

    Negatives are redrawn every epoch. The trace records the objective
    evaluated before each update plus the final value.
    """
    x = check_signals(g, signals)
    rng = make_rng(cfg.seed)
    opt = ad.Adam(net.params, cfg.lr)
    everyone = np.arange(g.n)
    trace: list[float] = []
    for _ in range(cfg.epochs):
        neg = sample_negatives(rng, everyone, cfg.negatives_per_vertex)
        opt.zero_grad()
        obj = mi_objective(net, g, x, everyone, neg)
        trace.append(obj.item())
        (-obj).backward()
        opt.step()
    neg = sample_negatives(rng, everyone, cfg.negatives_per_vertex)
    trace.append(mi_objective(net, g, x, everyone, neg).item())
    return net, trace


# ---------------------------------------------------------------------------
# frozen-network evaluation


def _logsig(t: np.ndarray) -> np.ndarray:
    return np.minimum(t, 0.0) - np.log1p(np.exp(-np.abs(t)))


class FrozenAffinity:
    """Numpy evaluation of ``T(v, u)`` with embeddings computed once.

    The first affinity-head layer splits over the concatenation, so
    ``T(v, u) = relu(a_v + b_u + c) . w + w0`` with per-vertex ``a`` and ``b``.
    """

    def __init__(self, net: AffinityNet, g: Graph, signals):
        emb = embed(net, g, signals)
        w1 = net.params["S.W1"].value
        d = net.dim
        self.a = emb.ev.value @ w1[:d]
        self.b = emb.pu.value @ w1[d:]
        self.c = net.params["S.b1"].value[0]
        self.w = net.params["S.W2"].value[:, 0]
        self.w0 = float(net.params["S.b2"].value[0, 0])
        self.n = g.n

    def pairs(self, v_idx, u_idx) -> np.ndarray:
        v_idx = np.asarray(v_idx, dtype=np.intp).ravel()
        u_idx = np.asarray(u_idx, dtype=np.intp).ravel()
        out = np.empty(v_idx.size)
        step = 4096
        for lo in range(0, v_idx.size, step):
            hi = lo + step
            hidden = np.maximum(self.a[v_idx[lo:hi]] + self.b[u_idx[lo:hi]] + self.c, 0.0)
            out[lo:hi] = hidden @ self.w + self.w0
        return out

    def self_scores(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.pairs(idx, idx)


def neighborhood_embed(net: AffinityNet, g: Graph, signals, u: int) -> np.ndarray:
    """``P(q_u)`` as a length-``d`` vector."""
    return embed(net, g, signals).pu.value[int(u)].copy()


def affinity(net: AffinityNet, g: Graph, signals, v: int, u: int) -> float:
    """``T(s_v, q_u)``."""
    return float(FrozenAffinity(net, g, signals).pairs([v], [u])[0])


def attention_vector(net: AffinityNet, g: Graph, signals) -> np.ndarray:
    """Per-vertex attention ``sigmoid(T(v, v))``."""
    t = FrozenAffinity(net, g, signals).self_scores()
    return 1.0 / (1.0 + np.exp(-t))


def criterion_score(net: AffinityNet, g: Graph, signals, candidate_set, max_pairs: int = 20000,
                    seed: int = 0, frozen: FrozenAffinity | None = None, n_samples: int | None = None) -> float:
    """``C(M)`` for a frozen network.

    The second term averages over ordered pairs ``v != u``; when there are
    more than ``max_pairs`` of them it is estimated from ``n_samples``
    uniformly drawn pairs (default ``max_pairs``).
    """
    ms = np.asarray(list(candidate_set), dtype=np.intp)
    if ms.size == 0:
        raise SelectionError("criterion needs a nonempty vertex set")
    fz = frozen or FrozenAffinity(net, g, signals)
    first = float(np.mean(_logsig(fz.pairs(ms, ms))))
    m = ms.size
    if m < 2:
        return first
    if m * (m - 1) <= max_pairs:
        vv, uu = np.meshgrid(ms, ms, indexing="ij")
        off = ~np.eye(m, dtype=bool)
        v_idx, u_idx = vv[off], uu[off]
    else:
        rng = make_rng(seed)
        draws = max_pairs if n_samples is None else n_samples
        i = rng.integers(0, m, size=draws)
        j = rng.integers(0, m - 1, size=draws)
        j = j + (j >= i)
        v_idx, u_idx = ms[i], ms[j]
    second = float(np.mean(_logsig(-fz.pairs(v_idx, u_idx))))
    return first + second


def greedy_trace(frozen: FrozenAffinity, m: int) -> tuple[list[int], list[float]]:
    """Greedy maximization of ``C``; returns selected vertices and ``C`` after each step.

    Sums over the current set are updated incrementally, so each step costs
    ``O(n)`` affinity evaluations. Ties go to the lowest vertex id.
    """
    n = frozen.n
    if m > n:
        raise SelectionError(f"cannot select {m} vertices from {n}")
    pos = _logsig(frozen.self_scores())
    cross = np.zeros(n)      # sum over selected u of log(1-sig T(v,u)) + log(1-sig T(u,v))
    sum_pos = 0.0
    sum_neg = 0.0
    available = np.ones(n, dtype=bool)
    chosen: list[int] = []
    trace: list[float] = []
    everyone = np.arange(n)
    for step in range(m):
        k = step + 1
        score = (sum_pos + pos) / k
        if step:
            score = score + (sum_neg + cross) / (k * (k - 1))
        score = np.where(available, score, -np.inf)
        best = int(np.argmax(score))
        chosen.append(best)
        trace.append(float(score[best]))
        available[best] = False
        sum_pos += pos[best]
        sum_neg += cross[best]
        cross += _logsig(-frozen.pairs(everyone, np.full(n, best)))
        cross += _logsig(-frozen.pairs(np.full(n, best), everyone))
    return chosen, trace


def greedy_select(net: AffinityNet, g: Graph, signals, m: int) -> SamplingPlan:
    frozen = FrozenAffinity(net, g, signals)
    chosen, _ = greedy_trace(frozen, m)
    return SamplingPlan(tuple(chosen), _sig(frozen.self_scores()))


def top_k_select(net: AffinityNet, g: Graph, signals, k: int) -> SamplingPlan:
    """Keep the ``k`` vertices with the largest self-affinity (first criterion term only).

    Returned indices are sorted ascending; ties go to the lower id.
    """
    if k > g.n:
        raise SelectionError(f"cannot keep {k} of {g.n} vertices")
    scores = FrozenAffinity(net, g, signals).self_scores()
    order = np.lexsort((np.arange(g.n), -scores))
    keep = np.sort(order[:k])
    return SamplingPlan(tuple(int(i) for i in keep), _sig(scores))


def _sig(t: np.ndarray) -> np.ndarray:
    return np.exp(_logsig(t))


@dataclass
class NeuralSelection:
    plan: SamplingPlan
    net: AffinityNet
    objective_trace: list[float] = field(default_factory=list)
    criterion_trace: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "indices": list(self.plan.indices),
            "attention": [float(a) for a in self.plan.attention],
            "criterion_trace": [float(c) for c in self.criterion_trace],
        }


def neural_sample(g: Graph, signals, m: int, dim: int = 32, radius: int = 1,
                  cfg: SamplerTrainConfig = SamplerTrainConfig()) -> NeuralSelection:
    """Train an affinity network on ``signals`` (unsupervised) and greedily pick ``m`` vertices."""
    x = check_signals(g, signals)
    net = AffinityNet.init(x.shape[1], dim=dim, radius=radius, seed=cfg.seed)
    net, obj = train_affinity(net, g, x, cfg)
    frozen = FrozenAffinity(net, g, x)
    chosen, crit = greedy_trace(frozen, m)
    plan = SamplingPlan(tuple(chosen), _sig(frozen.self_scores()))
    return NeuralSelection(plan, net, obj, crit)
