"""Graph cross network: a multiscale graph-convolution stack built on neural sampling and recovery.

Coarser scales keep the top-scoring vertices of the previous scale (by
self-affinity) and connect them with a reduced graph. Features move down by
gathering kept rows and up through unrolled recovery networks. Feature-crossing
layers add the neighbouring scales' features after each per-scale
convolution. Also provides the two-layer GCN classifier used for active
sampling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .autodiff import Tensor
from .generators import make_rng
from .graph import Graph, GraphError, SamplingPlan, check_signals, laplacian
from .neural_recovery import UnrolledRecovery, unrolled_tensor
from .neural_sampling import AffinityNet, FrozenAffinity, attention_tensor, embed, mi_objective, sample_negatives

REDUCTIONS = ("direct", "fused", "kron")
KRON_CLAMP = 1e-12
DENSE_FRACTION = 0.25


class KronFallbackWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# graph reduction and feature transfer


def _finish_adjacency(a: np.ndarray) -> Graph:
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return Graph(a)


def downsample_graph(g: Graph, indices, method: str = "fused") -> Graph:
    """Graph on the kept vertices ``indices`` (in that order).

    ``direct`` keeps the induced subgraph, ``fused`` uses
    ``S A S^T`` with ``S = row_softmax(A[indices])`` and ``kron`` takes the
    Schur complement of the Laplacian onto the kept vertices.
    """
    idx = np.asarray(indices, dtype=np.intp).ravel()
    if idx.size == 0:
        raise GraphError("downsampling needs at least one kept vertex")
    if np.unique(idx).size != idx.size or idx.min() < 0 or idx.max() >= g.n:
        raise GraphError("kept indices must be distinct and in range")
    a = g.adjacency
    if method == "direct":
        return _finish_adjacency(a[np.ix_(idx, idx)].copy())
    if method == "fused":
        rows = a[idx]
        rows = rows - rows.max(axis=1, keepdims=True)
        s = np.exp(rows)
        s /= s.sum(axis=1, keepdims=True)
        return _finish_adjacency(s @ a @ s.T)
    if method == "kron":
        rest = np.setdiff1d(np.arange(g.n), idx)
        lap = laplacian(g)
        reduced = lap[np.ix_(idx, idx)]
        if rest.size:
            l_su = lap[np.ix_(idx, rest)]
            l_uu = lap[np.ix_(rest, rest)]
            try:
                sol = np.linalg.solve(l_uu, l_su.T)
                if not np.all(np.isfinite(sol)) or np.linalg.cond(l_uu) > 1e12:
                    raise np.linalg.LinAlgError("ill-conditioned")
            except np.linalg.LinAlgError:
                warnings.warn("unselected Laplacian block is singular; using a pseudo-inverse",
                              KronFallbackWarning, stacklevel=2)
                sol = np.linalg.pinv(l_uu) @ l_su.T
            reduced = reduced - l_su @ sol
        adj = -reduced
        np.fill_diagonal(adj, 0.0)
        adj = 0.5 * (adj + adj.T)
        adj[np.abs(adj) < KRON_CLAMP] = 0.0
        return _finish_adjacency(adj)
    raise ValueError(f"unknown reduction {method!r}; expected one of {REDUCTIONS}")


def upsampler_init(layers: int = 3, degree: int = 2) -> UnrolledRecovery:
    """Unrolled upsampler starting from the Haar-filter recovery iteration.

    For the symmetric shift ``lambda_max((I - S)^2) <= 4``, so step 1/4 is
    always admissible.
    """
    base = np.zeros(degree + 1)
    # I - (1/4)(I - S)^2 = 3/4 I + 1/2 S - 1/4 S^2
    base[:3] = (0.75, 0.5, -0.25)[: degree + 1]
    return UnrolledRecovery.from_array(np.tile(base, (layers, 1)))


def upsample_features(g: Graph, plan: SamplingPlan, coarse, model: UnrolledRecovery | None = None):
    """Lift per-kept-vertex features to all vertices of ``g`` with an unrolled recovery.

    Each column is recovered independently from measurements equal to the
    coarse values, unweighted by the plan's attention. Returns a tensor when
    ``coarse`` is a tensor and an array otherwise.
    """
    model = model or upsampler_init()
    as_array = not isinstance(coarse, Tensor)
    c = ad.as_tensor(coarse)
    if c.shape[0] != plan.m:
        raise GraphError(f"{c.shape[0]} coarse rows for {plan.m} kept vertices")
    a_m = plan.attention[list(plan.indices)]
    if np.any(a_m != 1.0):
        c = ad.div(c, Tensor(np.maximum(a_m, 1e-3)[:, None]))
    out = unrolled_tensor(model, g, plan.indices, c)
    return out.value.copy() if as_array else out


@dataclass
class Scales:
    """Graphs per scale and, for scale ``s >= 1``, the indices into scale ``s - 1`` that it keeps."""

    graphs: list[Graph]
    kept: list[np.ndarray]

    @property
    def count(self) -> int:
        return len(self.graphs)


def feature_crossing(states: list[Tensor], scales: Scales, upsamplers: list[UnrolledRecovery],
                     down: bool = True, up: bool = True) -> list[Tensor]:
    """``h_s + down(h_{s-1}) + up(h_{s+1})`` for every scale, using the incoming states throughout.

    ``upsamplers[s]`` lifts scale ``s + 1`` features to scale ``s``.
    """
    count = len(states)
    out = []
    for s in range(count):
        h = states[s]
        if down and s > 0:
            h = h + ad.gather_rows(states[s - 1], scales.kept[s])
        if up and s < count - 1:
            h = h + unrolled_tensor(upsamplers[s], scales.graphs[s], scales.kept[s + 1], states[s + 1])
        out.append(h)
    return out


# ---------------------------------------------------------------------------
# graph convolution


def gcn_operator(g: Graph):
    """``D^-1/2 (A + I) D^-1/2`` with degrees of ``A + I`` (memoized; sparse when mostly zero)."""
    key = ("gcn_operator",)
    if key not in g._cache:
        a = g.adjacency + np.eye(g.n)
        d = 1.0 / np.sqrt(a.sum(axis=1))
        op = d[:, None] * a * d[None, :]
        g._cache[key] = sparse.csr_matrix(op) if np.count_nonzero(op) < DENSE_FRACTION * op.size else op
    return g._cache[key]


def graph_conv(g: Graph, h, weight: Tensor, bias: Tensor) -> Tensor:
    return ad.add(ad.apply_linear(gcn_operator(g), ad.as_tensor(h) @ weight), bias)


def vertex_loss(logits: Tensor, labels, mask) -> Tensor:
    """Summed cross-entropy over the vertices in ``mask``."""
    idx = np.flatnonzero(np.asarray(mask, dtype=bool)) if np.asarray(mask).dtype == bool \
        else np.asarray(mask, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("vertex_loss needs at least one labeled vertex")
    labels = np.asarray(labels, dtype=np.intp)
    logp = ad.row_log_softmax(ad.gather_rows(logits, idx))
    onehot = np.zeros(logp.shape)
    onehot[np.arange(idx.size), labels[idx]] = 1.0
    return -ad.sum(ad.mul(logp, Tensor(onehot)))


def sort_readout(features, k: int) -> Tensor:
    """Rows sorted by the last channel (descending, ties by vertex id), top ``k`` kept, flattened."""
    if k < 1:
        raise ValueError("k must be >= 1")
    f = ad.as_tensor(features)
    n, c = f.shape
    order = np.lexsort((np.arange(n), -f.value[:, -1]))[:k]
    rows = ad.gather_rows(f, order)
    if order.size < k:
        rows = ad.concat_rows([rows, Tensor(np.zeros((k - order.size, c)))])
    return ad.reshape(rows, (1, k * c))


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class ScaleSpec:
    keep_ratios: tuple[float, ...] = (1.0, 0.9, 0.7)
    reduction: str = "fused"

    def __post_init__(self):
        r = tuple(float(x) for x in self.keep_ratios)
        if not r or r[0] != 1.0:
            raise ValueError("the first keep ratio must be 1.0")
        if any(not 0.0 < x <= 1.0 for x in r) or any(b > a for a, b in zip(r, r[1:])):
            raise ValueError("keep ratios must lie in (0, 1] and be nonincreasing")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"unknown reduction {self.reduction!r}")
        object.__setattr__(self, "keep_ratios", r)

    def sizes(self, n: int) -> list[int]:
        return [max(1, int(round(r * n))) for r in self.keep_ratios]


@dataclass(frozen=True)
class CrossingPlan:
    """After which per-scale conv layers crossings happen and which directions they carry."""

    positions: frozenset
    down: bool = True
    up: bool = True


VARIANTS = {
    "full": CrossingPlan(frozenset({0, 1})),
    "noCross": CrossingPlan(frozenset()),
    "early": CrossingPlan(frozenset({0})),
    "late": CrossingPlan(frozenset({1})),
    "up-only": CrossingPlan(frozenset({0, 1}), down=False),
    "down-only": CrossingPlan(frozenset({0, 1}), up=False),
}
CONV_LAYERS = 2


@dataclass
class GxnModel:
    n_features: int
    n_classes: int
    hidden: int
    scale_spec: ScaleSpec
    variant: str
    task: str
    readout_k: int
    params: dict[str, Tensor]
    samplers: list[AffinityNet]
    upsamplers: dict[str, UnrolledRecovery]

    @property
    def scale_count(self) -> int:
        return len(self.scale_spec.keep_ratios)

    @property
    def crossing(self) -> CrossingPlan:
        return VARIANTS[self.variant]

    def all_params(self) -> dict[str, Tensor]:
        out = dict(self.params)
        for s, net in enumerate(self.samplers, start=1):
            out.update({f"sampler{s}.{k}": t for k, t in net.params.items()})
        out.update({f"{k}.h": m.coefficients for k, m in self.upsamplers.items()})
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.all_params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for k, t in self.all_params().items():
            t.value[...] = state[k]


def init_gxn(n_features: int, n_classes: int, hidden: int = 128, scale_spec: ScaleSpec = ScaleSpec(),
             variant: str = "full", task: str = "vertex", readout_k: int = 30, embed_dim: int = 32,
             radius: int = 1, seed: int = 0) -> GxnModel:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}")
    if task not in ("vertex", "graph"):
        raise ValueError("task must be 'vertex' or 'graph'")
    rng = make_rng(seed)
    p: dict[str, Tensor] = {
        "in.W": ad.glorot_uniform(rng, n_features, hidden, "in.W"),
        "in.b": ad.zeros(1, hidden, "in.b"),
    }
    count = len(scale_spec.keep_ratios)
    for s in range(count):
        for j in range(CONV_LAYERS):
            p[f"conv{s}.{j}.W"] = ad.glorot_uniform(rng, hidden, hidden, f"conv{s}.{j}.W")
            p[f"conv{s}.{j}.b"] = ad.zeros(1, hidden, f"conv{s}.{j}.b")
    out_dim = n_classes if task == "vertex" else hidden
    p["out.W"] = ad.glorot_uniform(rng, hidden, out_dim, "out.W")
    p["out.b"] = ad.zeros(1, out_dim, "out.b")
    if task == "graph":
        p["head.W"] = ad.glorot_uniform(rng, readout_k * hidden, n_classes, "head.W")
        p["head.b"] = ad.zeros(1, n_classes, "head.b")
    samplers = [AffinityNet.init(hidden, embed_dim, radius, seed=int(rng.integers(2**31)))
                for _ in range(count - 1)]
    ups = {}
    for s in range(count - 1):
        for tag in [str(j) for j in range(CONV_LAYERS)] + ["out"]:
            ups[f"up{tag}.{s}"] = upsampler_init()
    return GxnModel(n_features, n_classes, hidden, scale_spec, variant, task, readout_k, p, samplers, ups)


def build_scales(model: GxnModel, g: Graph, signals) -> Scales:
    """Select kept vertices scale by scale (top-K by self-affinity) and reduce the graph."""
    x = check_signals(g, signals)
    h = ad.relu(graph_conv(g, x, model.params["in.W"], model.params["in.b"])).value
    sizes = model.scale_spec.sizes(g.n)
    graphs = [g]
    kept = [np.arange(g.n)]
    for s in range(1, model.scale_count):
        prev = graphs[-1]
        scores = FrozenAffinity(model.samplers[s - 1], prev, h).self_scores()
        k = min(sizes[s], prev.n)
        order = np.lexsort((np.arange(prev.n), -scores))
        keep = np.sort(order[:k])
        a = 1.0 / (1.0 + np.exp(-scores[keep]))
        kept.append(keep)
        graphs.append(downsample_graph(prev, keep, model.scale_spec.reduction))
        h = h[keep] * a[:, None]
    return Scales(graphs, kept)


def _forward(model: GxnModel, g: Graph, x: np.ndarray, scales: Scales,
             rng: np.random.Generator | None = None, negatives: int = 5) -> tuple[Tensor, list[Tensor]]:
    """Output rows (vertex logits or the readout conv output) and the per-sampler MI estimates."""
    p = model.params
    h0 = ad.relu(graph_conv(g, x, p["in.W"], p["in.b"]))
    states = [h0]
    mi_terms: list[Tensor] = []
    for s in range(1, scales.count):
        prev_g = scales.graphs[s - 1]
        net = model.samplers[s - 1]
        emb = embed(net, prev_g, states[s - 1])
        att = attention_tensor(net, prev_g, states[s - 1], emb)
        keep = scales.kept[s]
        states.append(ad.mul(ad.gather_rows(states[s - 1], keep), ad.gather_rows(att, keep)))
        if rng is not None:
            everyone = np.arange(prev_g.n)
            neg = sample_negatives(rng, everyone, negatives)
            mi_terms.append(mi_objective(net, prev_g, None, everyone, neg, emb))
    plan = model.crossing
    for j in range(CONV_LAYERS):
        states = [ad.relu(graph_conv(scales.graphs[s], states[s], p[f"conv{s}.{j}.W"], p[f"conv{s}.{j}.b"]))
                  for s in range(scales.count)]
        if j in plan.positions and scales.count > 1:
            ups = [model.upsamplers[f"up{j}.{s}"] for s in range(scales.count - 1)]
            states = feature_crossing(states, scales, ups, down=plan.down, up=plan.up)
    z = states[-1]
    for s in range(scales.count - 2, -1, -1):
        z = states[s] + unrolled_tensor(model.upsamplers[f"upout.{s}"], scales.graphs[s], scales.kept[s + 1], z)
    out = graph_conv(g, z, p["out.W"], p["out.b"])
    return out, mi_terms


def gxn_forward(model: GxnModel, g: Graph, signals, scales: Scales | None = None) -> Tensor:
    """Per-vertex logits (vertex task) or ``(1, C)`` graph logits (graph task)."""
    x = check_signals(g, signals)
    scales = scales or build_scales(model, g, x)
    out, _ = _forward(model, g, x, scales)
    if model.task == "vertex":
        return out
    return _graph_head(model, out)


def _graph_head(model: GxnModel, out: Tensor) -> Tensor:
    r = sort_readout(out, model.readout_k)
    return ad.add(r @ model.params["head.W"], model.params["head.b"])


# ---------------------------------------------------------------------------
# training


@dataclass
class GxnTrainConfig:
    epochs: int = 100
    lr: float = 0.005
    hidden: int = 128
    keep_ratios: tuple[float, ...] = (1.0, 0.9, 0.7)
    reduction: str = "fused"
    variant: str = "full"
    loss_weight: float = 2.0
    refresh_every: int = 5
    negatives_per_vertex: int = 5
    readout_k: int = 30
    embed_dim: int = 32
    radius: int = 1
    seed: int = 0

    def weight_at(self, epoch: int) -> float:
        """Sampler-loss weight decaying linearly from ``loss_weight`` to 0 over training."""
        if self.epochs <= 1:
            return self.loss_weight
        return self.loss_weight * (1.0 - epoch / (self.epochs - 1))


@dataclass
class GxnReport:
    model: GxnModel
    loss_trace: list[float] = field(default_factory=list)
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    predictions: np.ndarray | None = None
    scores: np.ndarray | None = None


def _model_for(cfg: GxnTrainConfig, n_features: int, n_classes: int, task: str) -> GxnModel:
    return init_gxn(n_features, n_classes, cfg.hidden, ScaleSpec(tuple(cfg.keep_ratios), cfg.reduction),
                    cfg.variant, task, cfg.readout_k, cfg.embed_dim, cfg.radius, cfg.seed)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_gxn_vertex(g: Graph, signals, labels, train_mask, cfg: GxnTrainConfig = GxnTrainConfig()) -> GxnReport:
    """Semi-supervised vertex classification; accuracy is reported on the unlabeled vertices."""
    x = check_signals(g, signals)
    labels = np.asarray(labels, dtype=np.intp)
    train_mask = np.asarray(train_mask, dtype=bool)
    model = _model_for(cfg, x.shape[1], int(labels.max()) + 1, "vertex")
    opt = ad.Adam(model.all_params(), cfg.lr)
    rng = make_rng(cfg.seed + 1)
    trace: list[float] = []
    scales = None
    for epoch in range(cfg.epochs):
        if epoch % cfg.refresh_every == 0:
            scales = build_scales(model, g, x)
        weight = cfg.weight_at(epoch)
        opt.zero_grad()
        logits, mi_terms = _forward(model, g, x, scales, rng if weight > 0 else None, cfg.negatives_per_vertex)
        loss = vertex_loss(logits, labels, train_mask)
        for term in mi_terms:
            loss = loss - ad.scale(term, weight)
        trace.append(loss.item())
        loss.backward()
        opt.step()
    scales = build_scales(model, g, x)
    logits = _forward(model, g, x, scales)[0].value
    pred = np.argmax(logits, axis=1)
    test = ~train_mask
    return GxnReport(model, trace, float(np.mean(pred[train_mask] == labels[train_mask])),
                     float(np.mean(pred[test] == labels[test])) if test.any() else float("nan"),
                     pred, _softmax(logits))


def train_gxn_graph(dataset, labels, train_idx, cfg: GxnTrainConfig = GxnTrainConfig()) -> GxnReport:
    """Graph classification over ``dataset = [(graph, signals), ...]``; full-batch Adam.

    Accuracy is reported on the graphs outside ``train_idx``.
    """
    labels = np.asarray(labels, dtype=np.intp)
    data = [(gr, check_signals(gr, sig)) for gr, sig in dataset]
    train_idx = np.asarray(train_idx, dtype=np.intp)
    model = _model_for(cfg, data[0][1].shape[1], int(labels.max()) + 1, "graph")
    opt = ad.Adam(model.all_params(), cfg.lr)
    rng = make_rng(cfg.seed + 1)
    trace: list[float] = []
    scales: list[Scales] = []
    for epoch in range(cfg.epochs):
        if epoch % cfg.refresh_every == 0:
            scales = [build_scales(model, gr, x) for gr, x in data]
        weight = cfg.weight_at(epoch)
        opt.zero_grad()
        loss = None
        for i in train_idx:
            gr, x = data[i]
            out, mi_terms = _forward(model, gr, x, scales[i], rng if weight > 0 else None, cfg.negatives_per_vertex)
            term = vertex_loss(_graph_head(model, out), labels[i:i + 1], np.array([0]))
            for t in mi_terms:
                term = term - ad.scale(t, weight / len(train_idx))
            loss = term if loss is None else loss + term
        trace.append(loss.item())
        loss.backward()
        opt.step()
    logits = np.vstack([gxn_forward(model, gr, x).value for gr, x in data])
    pred = np.argmax(logits, axis=1)
    test = np.setdiff1d(np.arange(len(data)), train_idx)
    return GxnReport(model, trace, float(np.mean(pred[train_idx] == labels[train_idx])),
                     float(np.mean(pred[test] == labels[test])) if test.size else float("nan"),
                     pred, _softmax(logits))


def train_gxn(data, signals, labels, task: str, mask_or_idx, cfg: GxnTrainConfig = GxnTrainConfig()) -> GxnReport:
    """Dispatch to vertex (``data`` is a Graph) or graph (``data`` is a list of graphs) training."""
    if task == "vertex":
        return train_gxn_vertex(data, signals, labels, mask_or_idx, cfg)
    if task == "graph":
        return train_gxn_graph(list(zip(data, signals)), labels, mask_or_idx, cfg)
    raise ValueError("task must be 'vertex' or 'graph'")


# ---------------------------------------------------------------------------
# plain GCN classifier


@dataclass
class GcnConfig:
    hidden: int = 16
    epochs: int = 200
    lr: float = 0.01
    seed: int = 0


@dataclass
class GcnResult:
    predictions: np.ndarray
    probabilities: np.ndarray
    loss_trace: list[float]


def gcn_classifier(g: Graph, signals, mask, labels, cfg: GcnConfig = GcnConfig(),
                   n_classes: int | None = None) -> GcnResult:
    """Two graph-convolution layers with relu between, trained by Adam on the masked cross-entropy."""
    x = check_signals(g, signals)
    labels = np.asarray(labels, dtype=np.intp)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("gcn_classifier needs at least one labeled vertex")
    c = n_classes or int(labels.max()) + 1
    rng = make_rng(cfg.seed)
    p = {
        "W1": ad.glorot_uniform(rng, x.shape[1], cfg.hidden, "W1"),
        "b1": ad.zeros(1, cfg.hidden, "b1"),
        "W2": ad.glorot_uniform(rng, cfg.hidden, c, "W2"),
        "b2": ad.zeros(1, c, "b2"),
    }
    opt = ad.Adam(p, cfg.lr)
    n_lab = int(mask.sum())

    def forward() -> Tensor:
        h = ad.relu(graph_conv(g, x, p["W1"], p["b1"]))
        return graph_conv(g, h, p["W2"], p["b2"])

    trace = []
    for _ in range(cfg.epochs):
        opt.zero_grad()
        loss = ad.scale(vertex_loss(forward(), labels, mask), 1.0 / n_lab)
        trace.append(loss.item())
        loss.backward()
        opt.step()
    logits = forward().value
    return GcnResult(np.argmax(logits, axis=1), _softmax(logits), trace)
