"""Reverse-mode differentiation over 2-D float64 arrays.

Every :class:`Tensor` holds a ``(rows, cols)`` array. Operations build a DAG
of closures; :meth:`Tensor.backward` orders it topologically (the tape) and
accumulates gradients into every node that requires them.

Broadcasting is deliberately narrow: a binary elementwise op accepts operands
of equal shape, or a ``(1, 1)`` scalar, ``(n, 1)`` column or ``(1, d)`` row
against a full ``(n, d)`` operand. Nothing else is silently expanded.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

LOG_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


_kink_recorders: list[list[np.ndarray]] = []


@contextmanager
def record_kinks():
    """Collect the arguments of non-smooth ops (relu, clamps) evaluated inside the block.

    :func:`grad_check` uses the sign pattern of these arrays to skip
    coordinates whose finite-difference stencil straddles a kink.
    """
    rec: list[np.ndarray] = []
    _kink_recorders.append(rec)
    try:
        yield rec
    finally:
        _kink_recorders.pop()


def _note_kink(arr: np.ndarray):
    for rec in _kink_recorders:
        rec.append(np.array(arr, copy=True))


def _as2d(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
    return arr


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, value, requires_grad: bool = False, name: str = "", _parents=(), _backward=None,
                 op: str = "leaf"):
        # leaves own a private copy; op outputs are fresh arrays already
        self.value = _as2d(value) if op == "leaf" else value
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad and op == "leaf" else None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], None] | None = _backward
        self.op = op
        self.name = name

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if np.isscalar(x):
        return Tensor(np.full((1, 1), float(x)))
    return Tensor(x)


def _node(value: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(value, op=op)
    return Tensor(value, requires_grad=True, _parents=tuple(parents), _backward=backward_fn, op=op)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            t.grad += g


def _grad_buffer(t: Tensor) -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    return t.grad


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == (1, 1):
        return g.sum().reshape(1, 1)
    if shape[1] == 1 and shape[0] == g.shape[0]:
        return g.sum(axis=1, keepdims=True)
    if shape[0] == 1 and shape[1] == g.shape[1]:
        return g.sum(axis=0, keepdims=True)
    raise ShapeError(f"cannot reduce gradient of shape {g.shape} to {shape}")


def _binary_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, int]:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return sa
    for full, small in ((sa, sb), (sb, sa)):
        if small == (1, 1) or (small == (full[0], 1)) or (small == (1, full[1])):
            return full
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("add", a, b)
    out = a.value + b.value

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))
    return _node(out, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("sub", a, b)
    out = a.value - b.value

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))
    return _node(out, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    """Elementwise product; a plain Python number scales."""
    if np.isscalar(b):
        return scale(a, b)
    if np.isscalar(a):
        return scale(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("mul", a, b)
    out = a.value * b.value

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.value, a.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.shape))
    return _node(out, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    if np.isscalar(b):
        return scale(a, 1.0 / b)
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("div", a, b)
    if np.any(b.value == 0):
        raise ZeroDivisionError("div: zero in denominator")
    out = a.value / b.value

    def bw(g):
        _accumulate(a, _unbroadcast(g / b.value, a.shape))
        _accumulate(b, _unbroadcast(-g * a.value / (b.value * b.value), b.shape))
    return _node(out, (a, b), bw, "div")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def bw(g):
        _accumulate(a, c * g)
    return _node(c * a.value, (a,), bw, "scale")


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    out = a.value @ b.value

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.value.T)
        if b.requires_grad:
            _accumulate(b, a.value.T @ g)
    return _node(out, (a, b), bw, "matmul")


def apply_linear(op, a) -> Tensor:
    """``op @ a`` for a constant matrix ``op`` (dense or scipy sparse) that takes no gradient."""
    a = as_tensor(a)
    if op.shape[1] != a.shape[0]:
        raise ShapeError(f"apply_linear: operator {op.shape} and tensor {a.shape} do not align")
    out = np.asarray(op @ a.value)
    op_t = op.T

    def bw(g):
        _accumulate(a, np.asarray(op_t @ g))
    return _node(out, (a,), bw, "apply_linear")


def transpose(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, g.T)
    return _node(a.value.T.copy(), (a,), bw, "transpose")


def reshape(a, shape: tuple[int, int]) -> Tensor:
    a = as_tensor(a)
    out = a.value.reshape(shape).copy()

    def bw(g):
        _accumulate(a, g.reshape(a.shape))
    return _node(out, (a,), bw, "reshape")


def gather_rows(a, idx) -> Tensor:
    """Rows ``a[idx]``; repeated indices accumulate in the backward pass."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {a.shape[0]} rows")
    out = a.value[idx]

    def bw(g):
        if not a.requires_grad or not idx.size:
            return
        order = np.argsort(idx, kind="stable")
        rows, starts = np.unique(idx[order], return_index=True)
        _grad_buffer(a)[rows] += np.add.reduceat(g[order], starts, axis=0)
    return _node(out, (a,), bw, "gather_rows")


def take(a, i: int, j: int) -> Tensor:
    """The single entry ``a[i, j]`` as a ``(1, 1)`` tensor."""
    a = as_tensor(a)
    out = a.value[i:i + 1, j:j + 1].copy()

    def bw(g):
        if a.requires_grad:
            _grad_buffer(a)[i, j] += g[0, 0]
    return _node(out, (a,), bw, "take")


def concat_cols(tensors: Iterable) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    rows = {t.shape[0] for t in ts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[t.shape for t in ts]}")
    out = np.concatenate([t.value for t in ts], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in ts])

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            _accumulate(t, g[:, lo:hi])
    return _node(out, ts, bw, "concat_cols")


def concat_rows(tensors: Iterable) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    cols = {t.shape[1] for t in ts}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ {[t.shape for t in ts]}")
    out = np.concatenate([t.value for t in ts], axis=0)
    bounds = np.cumsum([0] + [t.shape[0] for t in ts])

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            _accumulate(t, g[lo:hi])
    return _node(out, ts, bw, "concat_rows")


# ---------------------------------------------------------------------------
# reductions


def sum(a) -> Tensor:  # noqa: A001 - mirrors the primitive's name
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, np.full(a.shape, g[0, 0]))
    return _node(np.array([[a.value.sum()]]), (a,), bw, "sum")


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")

    def bw(g):
        _accumulate(a, np.full(a.shape, g[0, 0] / n))
    return _node(np.array([[a.value.mean()]]), (a,), bw, "mean")


def sum_rows(a) -> Tensor:
    """Column sums as a ``(1, d)`` row."""
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, np.broadcast_to(g, a.shape).copy())
    return _node(a.value.sum(axis=0, keepdims=True), (a,), bw, "sum_rows")


# ---------------------------------------------------------------------------
# nonlinearities


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.value)

    def bw(g):
        _accumulate(a, g * s * (1.0 - s))
    return _node(s, (a,), bw, "sigmoid")


def log_sigmoid(a) -> Tensor:
    """``log(sigmoid(x))`` evaluated without underflow."""
    a = as_tensor(a)
    x = a.value
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))

    def bw(g):
        _accumulate(a, g * _sigmoid(-x))
    return _node(out, (a,), bw, "log_sigmoid")


def log(a) -> Tensor:
    """Natural log of ``max(x, 1e-12)``; the clamped region has zero gradient."""
    a = as_tensor(a)
    _note_kink(a.value - LOG_FLOOR)
    clamped = np.maximum(a.value, LOG_FLOOR)
    live = a.value > LOG_FLOOR

    def bw(g):
        _accumulate(a, np.where(live, g / clamped, 0.0))
    return _node(np.log(clamped), (a,), bw, "log")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)

    def bw(g):
        _accumulate(a, g * out)
    return _node(out, (a,), bw, "exp")


def relu(a) -> Tensor:
    """``max(x, 0)``; the derivative at exactly 0 is taken as 0."""
    a = as_tensor(a)
    _note_kink(a.value)
    live = a.value > 0

    def bw(g):
        _accumulate(a, g * live)
    return _node(np.where(live, a.value, 0.0), (a,), bw, "relu")


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    _note_kink(a.value - floor)
    live = a.value > floor

    def bw(g):
        _accumulate(a, g * live)
    return _node(np.maximum(a.value, floor), (a,), bw, "clamp_min")


def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        _accumulate(a, s * (g - np.sum(g * s, axis=1, keepdims=True)))
    return _node(s, (a,), bw, "row_softmax")


def row_log_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        _accumulate(a, g - s * g.sum(axis=1, keepdims=True))
    return _node(out, (a,), bw, "row_log_softmax")


# ---------------------------------------------------------------------------
# backward pass


def build_tape(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that require gradients, in topological order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Accumulate ``d loss / d node`` into ``.grad`` of every reachable node.

    Leaf gradients accumulate across calls; zero them between steps.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = build_tape(loss)
    for node in tape:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               skip_kinks: bool = True, floor: float = 1e-6) -> float:
    """Largest relative error between reverse-mode and central-difference gradients.

    ``f`` re-evaluates the scalar loss from the current parameter values.
    Coordinates whose ``+-eps`` evaluations flip the sign of any relu or
    clamp argument are skipped when ``skip_kinks``.
    """
    for p in params:
        p.zero_grad()
    with record_kinks() as base_kinks:
        loss = f()
    loss.backward()
    analytic = [p.grad.copy() for p in params]
    base_signs = [np.sign(k) for k in base_kinks]
    worst = 0.0
    for p, ga in zip(params, analytic):
        it = np.nditer(p.value, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = p.value[ix]
            values = []
            crossed = False
            for sgn in (1.0, -1.0):
                p.value[ix] = orig + sgn * eps
                with record_kinks() as ks:
                    values.append(f().item())
                if skip_kinks and (len(ks) != len(base_signs) or
                                   any(not np.array_equal(np.sign(k), s) for k, s in zip(ks, base_signs))):
                    crossed = True
            p.value[ix] = orig
            if crossed:
                continue
            numeric = (values[0] - values[1]) / (2 * eps)
            denom = max(abs(numeric), abs(ga[ix]), floor)
            worst = max(worst, abs(numeric - ga[ix]) / denom)
    return worst
