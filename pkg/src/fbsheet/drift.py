"""Drift descriptors ``b(s, t, x)`` for plane SDEs.

Evaluators are vectorized. The last axis of ``x`` holds the ``d`` spatial
coordinates; ``s`` and ``t`` are passed with the leading shape of ``x`` plus
a trailing axis of length one, and the result has the shape of ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import PreconditionError

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DriftSpec:
    """A drift together with what is known about it.

    Attributes
    ----------
    evaluator : callable
        ``b(s, t, x)`` as described in the module docstring.
    l1_inf_norm : float
        Declared ``sup_{s,t} ∫ |b(s, t, x)| dx``; ``math.inf`` for bounded
        drifts that are not integrable in ``x``.
    smooth : bool
        Whether ``b`` is smooth in ``x`` (finite-difference Jacobians allowed).
    d : int
        Spatial dimension.
    support_radius : float, optional
        Radius of a ball in ``x`` outside which ``b`` vanishes.
    tag : str
        Short identifier used in reports.
    bound : float
        Declared ``sup |b|``, ``math.inf`` if unbounded.
    autonomous : bool
        Whether ``b`` does not depend on ``(s, t)``.
    """

    evaluator: Evaluator
    l1_inf_norm: float
    smooth: bool
    d: int = 1
    support_radius: Optional[float] = None
    tag: str = "drift"
    bound: float = math.inf
    autonomous: bool = True
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.l1_inf_norm >= 0:
            raise PreconditionError(f"declared norm must be non-negative, got {self.l1_inf_norm}")
        if self.d < 1:
            raise PreconditionError(f"dimension must be >= 1, got {self.d}")

    def __call__(self, s, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        s = np.broadcast_to(np.asarray(s, dtype=float), lead)[..., None]
        t = np.broadcast_to(np.asarray(t, dtype=float), lead)[..., None]
        return np.broadcast_to(self.evaluator(s, t, x), x.shape)

    def jacobian(self, s, t, x, step: float = 1e-5) -> np.ndarray:
        """Central-difference Jacobian ``∂b_i/∂x_j``, shape ``x.shape + (d,)``."""
        x = np.asarray(x, dtype=float)
        J = np.empty(x.shape + (self.d,))
        for j in range(self.d):
            e = np.zeros(self.d)
            e[j] = step
            J[..., j] = (self(s, t, x + e) - self(s, t, x - e)) / (2 * step)
        return J


def zero(d: int = 1) -> DriftSpec:
    return DriftSpec(lambda s, t, x: np.zeros_like(x), 0.0, True, d, 0.0, "zero", 0.0)


def constant(c: float, d: int = 1) -> DriftSpec:
    return DriftSpec(
        lambda s, t, x: np.full_like(x, c), math.inf, True, d, None, f"const({c:g})", abs(c), params={"c": c}
    )


def linear(lam: float, d: int = 1) -> DriftSpec:
    """``b(x) = lam x``."""
    return DriftSpec(lambda s, t, x: lam * x, math.inf, True, d, None, f"linear({lam:g})", math.inf, params={"lam": lam})


def gaussian_bump(amp: float = 1.0, width: float = 1.0, center: float = 0.0, d: int = 1) -> DriftSpec:
    """``b(x) = amp exp(-|x - center|^2 / (2 width^2))`` in every coordinate."""

    def ev(s, t, x):
        r2 = np.sum((x - center) ** 2, axis=-1, keepdims=True)
        return amp * np.exp(-0.5 * r2 / width**2) * np.ones_like(x)

    norm = abs(amp) * (2 * math.pi * width**2) ** (d / 2)
    return DriftSpec(ev, norm, True, d, None, f"bump({amp:g},{width:g})", abs(amp),
                     params={"amp": amp, "width": width, "center": center})


def tanh_drift(amp: float = 1.0, d: int = 1) -> DriftSpec:
    """Bounded smooth ``b(x) = amp tanh(x)``."""
    return DriftSpec(lambda s, t, x: amp * np.tanh(x), math.inf, True, d, None, f"tanh({amp:g})", abs(amp))


def wave_drift(amp: float = 1.0, d: int = 1) -> DriftSpec:
    """Bounded smooth, time-dependent ``b(s, t, x) = amp sin(x + s - t)``."""
    return DriftSpec(
        lambda s, t, x: amp * np.sin(x + s - t),
        math.inf, True, d, None, f"wave({amp:g})", abs(amp), autonomous=False,
    )


def indicator(amp: float = 1.0, lo: float = -0.5, hi: float = 0.5, d: int = 1) -> DriftSpec:
    """Discontinuous integrable ``b(x) = amp 1{lo < x_k < hi for all k}``."""

    def ev(s, t, x):
        inside = np.all((x > lo) & (x < hi), axis=-1, keepdims=True)
        return amp * inside * np.ones_like(x)

    return DriftSpec(ev, abs(amp) * (hi - lo) ** d, False, d, None, f"indicator({amp:g},{lo:g},{hi:g})", abs(amp),
                     params={"amp": amp, "lo": lo, "hi": hi})


def absolute(b: DriftSpec) -> DriftSpec:
    """``|b|`` with the same declared norms."""
    return DriftSpec(lambda s, t, x: np.abs(b.evaluator(s, t, x)), b.l1_inf_norm, False, b.d,
                     b.support_radius, f"abs({b.tag})", b.bound, b.autonomous)


def scaled(b: DriftSpec, lam: float) -> DriftSpec:
    return DriftSpec(lambda s, t, x: lam * b.evaluator(s, t, x), abs(lam) * b.l1_inf_norm, b.smooth, b.d,
                     b.support_radius, f"{lam:g}*{b.tag}", abs(lam) * b.bound, b.autonomous)


def node_values(b: DriftSpec, S: np.ndarray, T: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Evaluate ``b`` on a channel-first field ``X`` of shape ``(d, n_s+1, n_t+1)``."""
    x = np.moveaxis(X, 0, -1)
    return np.moveaxis(b(S, T, x), -1, 0)
