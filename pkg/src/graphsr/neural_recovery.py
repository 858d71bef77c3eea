"""Unrolled trainable recovery and joint sampling/recovery training.

Each layer of the unrolled network applies a trainable polynomial filter and
then pins the sampled entries back to the measurements::

    x <- sum_{l=0..L} h[k, l] * shift^l @ x
    x[M] <- y / a[M]

With ``h[k] = e_0 - step_size * conv(h, h)`` every layer equals one step of the
analytical iteration, so the network starts from (and can represent) that
algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .autodiff import Tensor
from .generators import make_rng
from .graph import FilterSpec, Graph, SamplingPlan, check_signals
from .neural_sampling import (
    AffinityNet,
    FrozenAffinity,
    attention_tensor,
    embed,
    greedy_trace,
    mi_objective,
    sample_negatives,
)
from .recovery import ATTENTION_FLOOR, unweighted_measurements


@dataclass
class UnrolledRecovery:
    """``K`` layers of degree-``L`` polynomial filters; ``coefficients[k, l]`` multiplies ``shift^l``."""

    coefficients: Tensor
    shift_mode: str = "symmetric"

    def __post_init__(self):
        c = self.coefficients.value
        if c.shape[0] < 1:
            raise ValueError("need at least one layer")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")

    @property
    def layers(self) -> int:
        return self.coefficients.shape[0]

    @property
    def degree(self) -> int:
        return self.coefficients.shape[1] - 1

    @classmethod
    def from_array(cls, coefficients, shift_mode: str = "symmetric") -> "UnrolledRecovery":
        arr = np.atleast_2d(np.asarray(coefficients, dtype=np.float64))
        return cls(Tensor(arr, requires_grad=True, name="recovery.h"), shift_mode)

    @classmethod
    def identity(cls, layers: int = 8, degree: int = 3, shift_mode: str = "symmetric") -> "UnrolledRecovery":
        """Every layer passes its input through unchanged (``h[k] = e_0``)."""
        c = np.zeros((layers, degree + 1))
        c[:, 0] = 1.0
        return cls.from_array(c, shift_mode)

    @classmethod
    def from_iteration(cls, h: FilterSpec, step_size: float, layers: int) -> "UnrolledRecovery":
        """Layers reproducing ``x <- (I - step_size * h(S)^2) x`` for a symmetric shift."""
        return cls.from_array(np.tile(iteration_coefficients(h, step_size), (layers, 1)), "symmetric")

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"recovery.h": self.coefficients.value.copy()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        self.coefficients.value[...] = state["recovery.h"]


def iteration_coefficients(h: FilterSpec, step_size: float) -> np.ndarray:
    """Polynomial coefficients of ``I - step_size * h(S)^2`` (valid when ``h(S)`` is symmetric)."""
    sq = np.convolve(np.asarray(h.coefficients, dtype=np.float64), np.asarray(h.coefficients, dtype=np.float64))
    out = -step_size * sq
    out[0] += 1.0
    return out


def shift_operator(g: Graph, mode: str = "symmetric"):
    """The shift as a CSR matrix (memoized)."""
    key = ("shift_csr", mode)
    if key not in g._cache:
        g._cache[key] = sparse.csr_matrix(g.shift(mode))
    return g._cache[key]


def _placement(n: int, indices) -> sparse.csr_matrix:
    """``Psi^T``: scatters ``m`` rows into an ``n``-row array at ``indices``."""
    idx = np.asarray(indices, dtype=np.intp)
    return sparse.csr_matrix((np.ones(idx.size), (idx, np.arange(idx.size))), shape=(n, idx.size))


def unrolled_forward(model: UnrolledRecovery, g: Graph, plan: SamplingPlan, y,
                     floor: float = ATTENTION_FLOOR) -> np.ndarray:
    """Run the unrolled network on measurements ``y = Psi (a * x)``; returns the full signal."""
    x_m = unweighted_measurements(plan, y, floor)
    coeffs = model.coefficients.value
    s = shift_operator(g, model.shift_mode)
    sampled = list(plan.indices)
    x = np.zeros((g.n,) + x_m.shape[1:])
    x[sampled] = x_m
    for k in range(model.layers):
        with np.errstate(over="ignore", invalid="ignore"):
            term = x
            out = coeffs[k, 0] * term
            for ell in range(1, model.degree + 1):
                term = s @ term
                out = out + coeffs[k, ell] * term
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"non-finite values after unrolled layer {k}")
        out[sampled] = x_m
        x = out
    return x


def unrolled_tensor(model: UnrolledRecovery, g: Graph, indices, x_m: Tensor) -> Tensor:
    """Differentiable forward pass from already-unweighted measurements ``x_m`` (``m x c``)."""
    n = g.n
    s = shift_operator(g, model.shift_mode)
    place = _placement(n, indices)
    pinned = ad.apply_linear(place, x_m)
    free = np.ones((n, 1))
    free[np.asarray(indices, dtype=np.intp)] = 0.0
    free_t = Tensor(free)
    x = pinned
    for k in range(model.layers):
        term = x
        out = ad.mul(term, ad.take(model.coefficients, k, 0))
        for ell in range(1, model.degree + 1):
            term = ad.apply_linear(s, term)
            out = out + ad.mul(term, ad.take(model.coefficients, k, ell))
        x = ad.mul(out, free_t) + pinned
    return x


def measure_tensor(x: np.ndarray, attention: Tensor, indices, floor: float = ATTENTION_FLOOR) -> Tensor:
    """``y / a_M`` built from ``y = Psi (a * x)`` so gradients can reach ``a``."""
    a_m = ad.gather_rows(attention, indices)
    y = ad.mul(Tensor(x[np.asarray(indices, dtype=np.intp)]), a_m)
    return ad.div(y, ad.clamp_min(a_m, floor))


def squared_error(x: np.ndarray, x_hat: Tensor) -> Tensor:
    diff = ad.sub(x_hat, Tensor(x))
    return ad.sum(ad.mul(diff, diff))


def recovery_loss(model: UnrolledRecovery, net: AffinityNet, g: Graph, signals, m: int,
                  loss_weight: float = 0.0, negatives_per_vertex: int = 5, seed: int = 0,
                  indices=None) -> Tensor:
    """``sum_i ||x_i - recover(Psi(x_i * a))||^2 - loss_weight * MI_estimate(all vertices)``.

    ``indices`` defaults to a greedy selection of ``m`` vertices with the
    current network; the attention comes from the same network.
    """
    x = check_signals(g, signals)
    if m > g.n:
        raise ValueError(f"cannot sample {m} of {g.n} vertices")
    if indices is None:
        indices, _ = greedy_trace(FrozenAffinity(net, g, x), m)
    emb = embed(net, g, x)
    attention = attention_tensor(net, g, x, emb)
    x_hat = unrolled_tensor(model, g, indices, measure_tensor(x, attention, indices))
    loss = squared_error(x, x_hat)
    if loss_weight:
        neg = sample_negatives(make_rng(seed), np.arange(g.n), negatives_per_vertex)
        loss = loss - ad.scale(mi_objective(net, g, x, np.arange(g.n), neg, emb), loss_weight)
    return loss


@dataclass
class JointTrainConfig:
    epochs: int = 200
    lr: float = 0.05
    loss_weight: float = 1.0
    mode: str = "supervised"
    seed: int = 0
    refresh_every: int = 5
    negatives_per_vertex: int = 5
    layers: int = 8
    degree: int = 3
    embed_dim: int = 32
    radius: int = 1

    def __post_init__(self):
        if self.loss_weight < 0:
            raise ValueError("loss_weight must be >= 0")
        if self.mode not in ("supervised", "unsupervised"):
            raise ValueError("mode must be 'supervised' or 'unsupervised'")
        if self.epochs < 1 or self.lr <= 0 or self.refresh_every < 1:
            raise ValueError("epochs and refresh_every must be >= 1 and lr > 0")

    def weight_at(self, epoch: int) -> float:
        """Loss weight decaying linearly from ``loss_weight`` at epoch 0 to 0 at the last epoch."""
        if self.epochs == 1:
            return self.loss_weight
        return self.loss_weight * (1.0 - epoch / (self.epochs - 1))


@dataclass
class JointResult:
    net: AffinityNet
    model: UnrolledRecovery
    plan: SamplingPlan
    recovery_trace: list[float] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)


def train_joint(g: Graph, signals, m: int, cfg: JointTrainConfig = JointTrainConfig()) -> JointResult:
    """Train an affinity network and an unrolled recovery together.

    The sampled index set is re-derived by greedy selection every
    ``refresh_every`` epochs and held fixed in between. In supervised mode the
    recovery term reaches the sampler through the attention vector; in
    unsupervised mode the attention is detached so the sampler sees only the
    mutual information term.
    """
    x = check_signals(g, signals)
    if m > g.n:
        raise ValueError(f"cannot sample {m} of {g.n} vertices")
    net = AffinityNet.init(x.shape[1], cfg.embed_dim, cfg.radius, seed=cfg.seed)
    model = UnrolledRecovery.identity(cfg.layers, cfg.degree)
    params = dict(net.params)
    params["recovery.h"] = model.coefficients
    opt = ad.Adam(params, cfg.lr)
    rng = make_rng(cfg.seed)
    everyone = np.arange(g.n)
    indices: list[int] = []
    rec_trace: list[float] = []
    loss_trace: list[float] = []
    for epoch in range(cfg.epochs):
        if epoch % cfg.refresh_every == 0:
            indices, _ = greedy_trace(FrozenAffinity(net, g, x), m)
        weight = cfg.weight_at(epoch)
        opt.zero_grad()
        emb = embed(net, g, x)
        attention = attention_tensor(net, g, x, emb)
        if cfg.mode == "unsupervised":
            attention = attention.detach()
        rec = squared_error(x, unrolled_tensor(model, g, indices, measure_tensor(x, attention, indices)))
        loss = rec
        if weight > 0:
            neg = sample_negatives(rng, everyone, cfg.negatives_per_vertex)
            loss = rec - ad.scale(mi_objective(net, g, x, everyone, neg, emb), weight)
        rec_trace.append(rec.item())
        loss_trace.append(loss.item())
        loss.backward()
        opt.step()
    frozen = FrozenAffinity(net, g, x)
    indices, _ = greedy_trace(frozen, m)
    a = 1.0 / (1.0 + np.exp(-frozen.self_scores()))
    plan = SamplingPlan(tuple(indices), a)
    rec_trace.append(evaluate_recovery(model, g, plan, x)[0])
    return JointResult(net, model, plan, rec_trace, loss_trace)


def evaluate_recovery(model: UnrolledRecovery, g: Graph, plan: SamplingPlan, signals
                      ) -> tuple[float, np.ndarray]:
    """Summed squared error and per-signal relative errors of recovering ``signals`` from ``plan``."""
    x = check_signals(g, signals)
    a_m = plan.attention[list(plan.indices)]
    y = x[list(plan.indices)] * a_m[:, None]
    x_hat = unrolled_forward(model, g, plan, y)
    err = x_hat - x
    rel = np.linalg.norm(err, axis=0) / np.maximum(np.linalg.norm(x, axis=0), 1e-300)
    return float(np.sum(err * err)), rel
