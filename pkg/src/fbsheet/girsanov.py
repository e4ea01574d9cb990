r"""Drift removal for the fractional sheet by a change of measure.

For a path ``X`` the drift-removal field is

.. math:: \theta = K_H^{-1}\Big(\int_0^\cdot\!\int_0^\cdot b(u, v, X_{u,v})\,dv\,du\Big),

computed by the scaled fractional-integral formula of
:func:`fbsheet.kernel.kh_inverse_field`. Under the measure with density

.. math:: Z_{T,T} = \exp\Big(\sum \theta_{ij}\,\Delta W_{ij}
          - \tfrac12 \sum |\theta_{ij}|^2\,\Delta s\,\Delta t\Big)

the process ``W^H - ∫∫ b(X)`` is again a fractional sheet when ``X = x0 + W^H``.
All sums use the lower-left corner of each cell, so ``θ_ij`` only depends on
increments in cells strictly below and to the left.

On a grid the shift that the discrete density removes exactly is the kernel
image ``K_H(θ)`` of the left-corner field, which approximates ``∫∫ b(X)`` to
first order in the mesh. :func:`weighted_expectation` uses that image by
default; ``shift="direct"`` uses the left-corner drift integral instead and
carries the first-order bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from . import rng
from .drift import DriftSpec, absolute, node_values
from .errors import GridMismatchError
from .grid import Grid2D, SampledFn2D
from .kernel import HurstPair, kh_inverse_field
from .sim import SheetSample, brownian_increments, kernel_route

Functional = Callable[[np.ndarray], float]


@dataclass
class ThetaField:
    """Drift-removal field on a grid, shape ``(d, n_s + 1, n_t + 1)``."""

    grid: Grid2D
    values: np.ndarray

    @property
    def channels(self) -> int:
        return self.values.shape[0]


def theta_values(b: DriftSpec, grid: Grid2D, X: np.ndarray, h: HurstPair, normalized: bool = False) -> np.ndarray:
    """Array form of :func:`theta_field` for a channel-first path ``X``."""
    S, T = grid.mesh()
    dens = node_values(b, S, T, X)
    out = np.empty_like(dens)
    for c in range(dens.shape[0]):
        out[c] = kh_inverse_field(SampledFn2D(grid, dens[c]), h, normalized).values
    return out


def theta_field(b: DriftSpec, x_path: SheetSample, h: HurstPair, normalized: bool = False) -> ThetaField:
    r"""Drift-removal field along ``x_path``.

    Returns :math:`s^{h_1-1/2}t^{h_2-1/2} I^{1/2-h_1,1/2-h_2}[u^{1/2-h_1}
    v^{1/2-h_2} b(u, v, X_{u,v})](s, t)` per channel. With ``normalized=True``
    the field is rescaled to invert the normalized kernel exactly, which is
    the version that removes the drift in :func:`weighted_expectation`.
    """
    return ThetaField(x_path.grid, theta_values(b, x_path.grid, x_path.values, h, normalized))


def _increments(w: SheetSample) -> np.ndarray:
    V = w.values
    return V[:, 1:, 1:] - V[:, :-1, 1:] - V[:, 1:, :-1] + V[:, :-1, :-1]


def log_doleans(theta: np.ndarray, dW: np.ndarray, ds: float, dt: float) -> float:
    th = theta[:, :-1, :-1]
    return float(np.sum(th * dW) - 0.5 * np.sum(th * th) * ds * dt)


def doleans_exponential(theta: ThetaField, w: SheetSample) -> float:
    """``Z_{T,T}`` for a Brownian-sheet sample ``w`` on the grid of ``theta``."""
    if theta.grid != w.grid:
        raise GridMismatchError("theta and the Brownian sheet live on different grids")
    g = theta.grid
    return math.exp(log_doleans(theta.values, _increments(w), g.ds, g.dt))


def drift_integral(b: DriftSpec, grid: Grid2D, X: np.ndarray) -> np.ndarray:
    """Left-corner ``∫_0^s ∫_0^t b(u, v, X_{u,v}) dv du`` at every node."""
    S, T = grid.mesh()
    dens = node_values(b, S, T, X)
    out = np.zeros_like(dens)
    out[:, 1:, 1:] = np.cumsum(np.cumsum(dens[:, :-1, :-1], axis=1), axis=2) * grid.ds * grid.dt
    return out


def novikov_bound_shape(m: int, h: HurstPair, d: int) -> float:
    """``(m!)^(2 (h1 + h2) (1 + d))``, the growth shape of the Novikov moments."""
    return math.exp(2 * (h.h1 + h.h2) * (1 + d) * gammaln(m + 1))


def _theta_energy(b: DriftSpec, grid: Grid2D, h: HurstPair, x0, seed: int) -> float:
    route = kernel_route(grid, h, grid.n_s, grid.n_t)
    dW = brownian_increments(route.sim_grid, b.d, seed)
    X = np.asarray(x0, float).reshape(-1, 1, 1) + route.apply(dW)
    th = theta_values(absolute(b), grid, X, h)
    return float(np.sum(th[:, :-1, :-1] ** 2) * grid.ds * grid.dt)


def novikov_energies(
    b: DriftSpec, h: HurstPair, n_mc: int, grid: Grid2D | None = None, x0=0.0,
    seed_base: int = 1, workers: int = 1,
) -> np.ndarray:
    """Samples of ``∫∫ |θ|^2`` with ``θ`` built from ``|b|`` along ``x0 + W^H``."""
    grid = grid or Grid2D.square(1.0, 32)
    seeds = rng.replication_seeds(seed_base, "novikov", n_mc)
    return rng.run_chunked(
        lambda ch: np.array([_theta_energy(b, grid, h, x0, s) for s in ch]), seeds, workers
    )


def novikov_moment(
    b: DriftSpec, h: HurstPair, m: int, n_mc: int, grid: Grid2D | None = None, x0=0.0,
    seed_base: int = 1, workers: int = 1,
) -> float:
    """Monte-Carlo estimate of ``E[(∫∫ |θ|^2)^m]`` under the driftless sheet."""
    if m < 0:
        raise ValueError(f"moment order must be >= 0, got {m}")
    if m == 0:
        return 1.0
    return float(np.mean(novikov_energies(b, h, n_mc, grid, x0, seed_base, workers) ** m))


@dataclass(frozen=True)
class GirsanovEstimate:
    """Plain and reweighted Monte-Carlo estimates of one functional."""

    plain: float
    plain_se: float
    weighted: float
    weighted_se: float
    n: int
    seed_base: int

    @property
    def pooled_se(self) -> float:
        return math.hypot(self.plain_se, self.weighted_se)

    @property
    def z_score(self) -> float:
        if self.pooled_se == 0:
            return 0.0 if self.plain == self.weighted else math.inf
        return abs(self.plain - self.weighted) / self.pooled_se


def kernel_image(theta: np.ndarray, grid: Grid2D, h: HurstPair) -> np.ndarray:
    """Left-corner ``K_H(θ)``: the sheet driven by the increments ``θ ds dt``."""
    route = kernel_route(grid, h, grid.n_s, grid.n_t)
    return route.apply(theta[:, :-1, :-1] * grid.ds * grid.dt)


def girsanov_replication(
    functionals: Sequence[Functional], b: DriftSpec, h: HurstPair, grid: Grid2D, x0, seed: int,
    shift: str = "kernel",
) -> np.ndarray:
    """One replication: ``[Z, F_1(W^H), ..., F_k(W^H), F_1(W^H - ∫∫b), ...]``."""
    route = kernel_route(grid, h, grid.n_s, grid.n_t)
    dW = brownian_increments(route.sim_grid, b.d, seed)
    WH = route.apply(dW)
    X = np.asarray(x0, float).reshape(-1, 1, 1) + WH
    theta = theta_values(b, grid, X, h, normalized=True)
    Z = math.exp(log_doleans(theta, dW, grid.ds, grid.dt))
    if shift == "kernel":
        shifted = WH - route.apply(theta[:, :-1, :-1] * grid.ds * grid.dt)
    elif shift == "direct":
        shifted = WH - drift_integral(b, grid, X)
    else:
        raise ValueError(f"unknown shift {shift!r}")
    return np.array([Z] + [f(WH) for f in functionals] + [f(shifted) for f in functionals])


def girsanov_samples(
    functionals: Sequence[Functional], b: DriftSpec, h: HurstPair, n_mc: int,
    grid: Grid2D | None = None, x0=0.0, seed_base: int = 1, workers: int = 1, shift: str = "kernel",
) -> np.ndarray:
    grid = grid or Grid2D.square(1.0, 32)
    seeds = rng.replication_seeds(seed_base, "girsanov", n_mc)
    return rng.run_chunked(
        lambda ch: np.stack([girsanov_replication(functionals, b, h, grid, x0, s, shift) for s in ch]),
        seeds, workers,
    )


def _estimates(samples: np.ndarray, k: int, seed_base: int) -> list[GirsanovEstimate]:
    Z = samples[:, 0]
    out = []
    for i in range(k):
        p, pse = rng.mean_and_se(samples[:, 1 + i])
        w, wse = rng.mean_and_se(Z * samples[:, 1 + k + i])
        out.append(GirsanovEstimate(p, pse, w, wse, samples.shape[0], seed_base))
    return out


def weighted_expectations(
    functionals: Sequence[Functional], b: DriftSpec, h: HurstPair, n_mc: int,
    grid: Grid2D | None = None, x0=0.0, seed_base: int = 1, workers: int = 1, shift: str = "kernel",
) -> tuple[list[GirsanovEstimate], tuple[float, float]]:
    """Girsanov cross-check for several functionals on shared samples.

    Returns the per-functional estimates and ``(mean, se)`` of ``Z_{T,T}``.
    """
    samples = girsanov_samples(functionals, b, h, n_mc, grid, x0, seed_base, workers, shift)
    return _estimates(samples, len(functionals), seed_base), rng.mean_and_se(samples[:, 0])


def weighted_expectation(
    functional: Functional, b: DriftSpec, h: HurstPair, n_mc: int,
    grid: Grid2D | None = None, x0=0.0, seed_base: int = 1, workers: int = 1, shift: str = "kernel",
) -> GirsanovEstimate:
    """``E[F(W^H)]`` next to ``E[Z_{T,T} F(W^H - ∫∫ b(x0 + W^H))]``.

    See the module docstring for the discretization of the shift.

    Both estimates use the same samples; under the change of measure they
    have the same expectation. ``functional`` maps a channel-first field on
    ``grid`` to a real number.
    """
    ests, _ = weighted_expectations([functional], b, h, n_mc, grid, x0, seed_base, workers, shift)
    return ests[0]


def node_functional(s: float, t: float, grid: Grid2D, clip: float = 2.0, channel: int = 0) -> Functional:
    """``F(w) = clip(w(s, t), -clip, clip)``."""
    i, j = grid.node_index(s, t)
    return lambda w: float(np.clip(w[channel, i, j], -clip, clip))
