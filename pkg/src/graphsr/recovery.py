"""Recovery of a full graph signal from attention-weighted samples.

The recovered signal minimizes ``||h(S) x||^2`` subject to reproducing the
measurements, ``x_M * a_M = y``. The closed form solves one SPD system on the
unsampled block; the iterative form alternates a filtering step
``x <- (I - step_size H) x`` with a reset of the sampled entries.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graph import FilterSpec, Graph, SamplingPlan
from .numerics import SolverError, solve_spd, spectral_norm, sym_eigen

ATTENTION_FLOOR = 1e-3
DIVERGENCE_LIMIT = 1e12
SINGULAR_TOL = 1e-10


class RecoveryError(ArithmeticError):
    pass


class DivergenceError(RecoveryError):
    pass


class AttentionClampWarning(RuntimeWarning):
    pass


class SingularBlockWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class RecoveryOperator:
    """``H = h(S)^T h(S)`` together with the index partition of a sampling plan."""

    H: np.ndarray
    sampled: tuple[int, ...]
    unsampled: tuple[int, ...]

    def block(self, rows: str, cols: str) -> np.ndarray:
        pick = {"M": list(self.sampled), "U": list(self.unsampled)}
        return self.H[np.ix_(pick[rows], pick[cols])]

    @property
    def H_MM(self):
        return self.block("M", "M")

    @property
    def H_MU(self):
        return self.block("M", "U")

    @property
    def H_UM(self):
        return self.block("U", "M")

    @property
    def H_UU(self):
        return self.block("U", "U")

    def iteration_matrix(self, step_size: float) -> np.ndarray:
        """``I - step_size * H``."""
        return np.eye(self.H.shape[0]) - step_size * self.H


def build_recovery_operator(g: Graph, h: FilterSpec, plan: SamplingPlan,
                            shift_mode: str = "symmetric") -> RecoveryOperator:
    hm = h.matrix(g.shift(shift_mode))
    big_h = hm.T @ hm
    big_h = 0.5 * (big_h + big_h.T)
    return RecoveryOperator(big_h, plan.indices, plan.complement)


def unweighted_measurements(plan: SamplingPlan, y, floor: float = ATTENTION_FLOOR) -> np.ndarray:
    """``y / a_M`` with the attention clamped from below at ``floor``."""
    y = np.asarray(y, dtype=np.float64)
    a = plan.attention[list(plan.indices)]
    if y.shape[0] != a.size:
        raise RecoveryError(f"{y.shape[0]} measurements for {a.size} sampled vertices")
    if np.any(a < floor):
        warnings.warn(f"attention below {floor:g} clamped at {np.count_nonzero(a < floor)} "
                      "sampled vertices", AttentionClampWarning, stacklevel=3)
        a = np.maximum(a, floor)
    return y / a if y.ndim == 1 else y / a[:, None]


def recover_closed_form(op: RecoveryOperator, plan: SamplingPlan, y, strict: bool = False) -> np.ndarray:
    """Minimizer of ``x^T H x`` with sampled entries pinned to ``y / a_M``.

    A singular ``H_UU`` (for example the identity filter, where ``H_UM = 0``)
    falls back to the minimum-norm least-squares completion with a warning, or
    raises :class:`RecoveryError` when ``strict``.
    """
    x_m = unweighted_measurements(plan, y)
    n = op.H.shape[0]
    out = np.zeros((n,) + x_m.shape[1:])
    out[list(op.sampled)] = x_m
    if not op.unsampled:
        return out
    h_uu = op.H_UU
    rhs = -op.H_UM @ x_m
    try:
        lam_min = float(sym_eigen(h_uu).values[0])
        if lam_min <= SINGULAR_TOL * max(1.0, float(np.abs(h_uu).max())):
            raise SolverError("H_UU is numerically singular")
        x_u = solve_spd(h_uu, rhs)
    except SolverError as exc:
        if strict:
            raise RecoveryError(
                f"{exc}; pick a filter that couples sampled and unsampled vertices "
                "or a different sample set") from exc
        warnings.warn("H_UU is singular; using the minimum-norm completion",
                      SingularBlockWarning, stacklevel=2)
        x_u = np.linalg.lstsq(h_uu, rhs, rcond=None)[0]
    out[list(op.unsampled)] = x_u
    return out


def default_step_size(op: RecoveryOperator) -> float:
    """``1 / lambda_max(H)``; keeps ``||I - step H||_2 <= 1`` and hence its UU block."""
    lam_max = spectral_norm(op.H)
    if lam_max <= 0:
        raise RecoveryError("H is zero: no step size is defined")
    return 1.0 / lam_max


def recover_iterative(op: RecoveryOperator, plan: SamplingPlan, y, step_size: float | None = None,
                      iters: int = 500, reference=None) -> tuple[np.ndarray, list[float]]:
    """Run the filter-and-reset iteration for ``iters`` steps.

    Returns the final iterate and a per-iteration trace. With ``reference``
    given the trace holds the relative error of the unsampled block against
    it; otherwise it holds the relative change between consecutive iterates.
    """
    if step_size is None:
        step_size = default_step_size(op)
    if step_size <= 0:
        raise RecoveryError("step size must be positive")
    x_m = unweighted_measurements(plan, y)
    sampled = list(op.sampled)
    unsampled = list(op.unsampled)
    x = np.zeros((op.H.shape[0],) + x_m.shape[1:])
    x[sampled] = x_m
    step = op.iteration_matrix(step_size)
    ref_u = None if reference is None else np.asarray(reference)[unsampled]
    ref_norm = None if ref_u is None else max(np.linalg.norm(ref_u), 1e-300)
    trace: list[float] = []
    for _ in range(iters):
        prev = x
        x = step @ x
        x[sampled] = x_m
        size = np.linalg.norm(x)
        if not np.isfinite(size) or size > DIVERGENCE_LIMIT:
            raise DivergenceError(f"iteration diverged with step size {step_size:g}")
        if ref_u is not None:
            trace.append(float(np.linalg.norm(x[unsampled] - ref_u) / ref_norm))
        else:
            trace.append(float(np.linalg.norm(x - prev) / max(size, 1e-300)))
    return x, trace


def contraction_factor(op: RecoveryOperator, step_size: float) -> float:
    """``||(I - step H)_UU||_2``, the per-iteration error contraction bound."""
    u = list(op.unsampled)
    return spectral_norm(op.iteration_matrix(step_size)[np.ix_(u, u)])
