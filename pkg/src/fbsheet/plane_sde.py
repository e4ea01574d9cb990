r"""Solvers for the plane SDE ``X = x0 + ∫∫ b(X) + W^H`` on a grid.

The explicit scheme uses the lower-left corner rule for the drift integral,

.. math:: X_{ij} = x_0 + \sum_{i' < i,\ j' < j} b(s_{i'}, t_{j'}, X_{i'j'})\,\Delta s\,\Delta t + W^H_{ij},

so each node only depends on nodes with strictly smaller indices. Picard
iteration of the same discrete map has the scheme's output as its fixed point.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import rng
from .drift import DriftSpec, node_values
from .errors import DomainError, GridMismatchError, IterationLimitError, PreconditionError, SolverError
from .grid import Grid2D
from .kernel import HurstPair, _k1
from .sim import SheetSample, brownian_increments, kernel_route, sample_fbs_cholesky, sample_fbs_kernel
from .sim import sim_cells as sim_cells_for


@dataclass
class SolutionSample:
    """Solution of the plane SDE on a grid, channel-first values."""

    grid: Grid2D
    x0: np.ndarray
    values: np.ndarray
    noise_seed: int
    drift_tag: str
    metadata: dict = field(default_factory=dict)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    def at(self, s: float, t: float, channel: int = 0) -> float:
        i, j = self.grid.node_index(s, t)
        return float(self.values[channel, i, j])

    def to_csv(self, path) -> None:
        S, T = self.grid.mesh()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "s", "t", "value"])
            for c in range(self.channels):
                for s, t, v in zip(S.ravel(), T.ravel(), self.values[c].ravel()):
                    w.writerow([c, repr(float(s)), repr(float(t)), repr(float(v))])


def _x0(x0, d: int) -> np.ndarray:
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size == 1 and d > 1:
        x = np.repeat(x, d)
    if x.size != d:
        raise PreconditionError(f"x0 has {x.size} entries, noise has {d} channels")
    return x


def euler_arrays(b: DriftSpec, x0: np.ndarray, WH: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Explicit scheme on a channel-first noise array; returns the path."""
    d = WH.shape[0]
    s, t = grid.s, grid.t
    X = np.empty_like(WH)
    X[:, 0, :] = x0[:, None] + WH[:, 0, :]
    acc = np.zeros((d, grid.n_t + 1))
    area = grid.ds * grid.dt
    for i in range(1, grid.n_s + 1):
        row = np.moveaxis(b(np.full(grid.n_t + 1, s[i - 1]), t, X[:, i - 1, :].T), -1, 0)
        if not np.all(np.isfinite(row)):
            j = int(np.argmax(~np.all(np.isfinite(row), axis=0)))
            raise SolverError(f"non-finite drift at node ({i - 1}, {j})", location=(i - 1, j))
        acc += row
        X[:, i, 0] = x0 + WH[:, i, 0]
        X[:, i, 1:] = x0[:, None] + np.cumsum(acc[:, :-1], axis=1) * area + WH[:, i, 1:]
    return X


def euler_solve(b: DriftSpec, x0, noise: SheetSample) -> SolutionSample:
    """Explicit lower-left-corner scheme driven by a fractional sheet sample.

    Raises
    ------
    SolverError
        If the drift returns a non-finite value; ``location`` holds the node.
    """
    x = _x0(x0, noise.channels)
    X = euler_arrays(b, x, noise.values, noise.grid)
    return SolutionSample(noise.grid, x, X, noise.seed, b.tag, {"solver": "euler"})


def _drift_sum(b: DriftSpec, X: np.ndarray, grid: Grid2D) -> np.ndarray:
    S, T = grid.mesh()
    dens = node_values(b, S, T, X)
    out = np.zeros_like(X)
    out[:, 1:, 1:] = np.cumsum(np.cumsum(dens[:, :-1, :-1], axis=1), axis=2) * grid.ds * grid.dt
    return out


def picard_solve(b: DriftSpec, x0, noise: SheetSample, max_iter: int = 200, tol: float = 1e-12) -> SolutionSample:
    """Fixed-point iteration ``X <- x0 + ∫∫ b(X) + W^H`` from ``x0 + W^H``.

    Stops once the largest change over all nodes is below ``tol``; the
    number of iterations used is stored in ``metadata["iterations"]``.

    Raises
    ------
    IterationLimitError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    x = _x0(x0, noise.channels)
    base = x[:, None, None] + noise.values
    X = base.copy()
    residual = math.inf
    for k in range(1, max_iter + 1):
        X_new = base + _drift_sum(b, X, noise.grid)
        if not np.all(np.isfinite(X_new)):
            raise SolverError("non-finite iterate in Picard iteration")
        residual = float(np.max(np.abs(X_new - X)))
        X = X_new
        if residual < tol:
            return SolutionSample(noise.grid, x, X, noise.seed, b.tag,
                                  {"solver": "picard", "iterations": k, "residual": residual})
    raise IterationLimitError(f"Picard iteration did not reach {tol:g} in {max_iter} steps", residual)


def _smooth_step(r: np.ndarray) -> np.ndarray:
    # C-infinity step: 1 for r <= 0, 0 for r >= 1.
    r = np.clip(r, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(r < 1, np.exp(-1.0 / np.where(r < 1, 1 - r, 1.0)), 0.0)
        f1 = np.where(r > 0, np.exp(-1.0 / np.where(r > 0, r, 1.0)), 0.0)
    return f0 / (f0 + f1)


def _gaussian_nodes(sigma: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Legendre nodes on [-4 sigma, 4 sigma] with truncated Gaussian weights.
    z, w = leggauss(n)
    y = 4 * sigma * z
    w = w * np.exp(-0.5 * (y / sigma) ** 2)
    return y, w / w.sum()


def mollify_drift(b: DriftSpec, n: int, n_quad: int | None = None, n_time: int = 5) -> DriftSpec:
    """Smooth, compactly supported approximation ``b_n = (b * ρ_{1/n}) χ_n``.

    ``ρ`` is a tensor Gaussian with standard deviation ``1/(4n)`` truncated at
    four standard deviations and renormalized, applied in ``x`` and, unless
    ``b`` is autonomous, in ``(s, t)`` with times clamped at zero. ``χ_n`` is
    a smooth cutoff equal to one on ``|x| <= n`` and zero beyond ``2n``.
    The convolution is evaluated by Gauss--Legendre quadrature.
    """
    if n < 1:
        raise ValueError(f"mollification index must be >= 1, got {n}")
    d = b.d
    sigma = 1.0 / (4 * n)
    nq = n_quad or (48 if d == 1 else 16)
    y, wy = _gaussian_nodes(sigma, nq)
    grids = np.meshgrid(*([y] * d), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)  # (nq^d, d)
    wx = np.prod(np.meshgrid(*([wy] * d), indexing="ij"), axis=0).ravel()
    if b.autonomous:
        tau, wt = np.zeros(1), np.ones(1)
    else:
        tau, wt = _gaussian_nodes(sigma, n_time)

    def ev(s, t, x):
        acc = np.zeros(np.broadcast_shapes(s.shape, x.shape))
        for ts, ws in zip(tau, wt):
            for tt, wtt in zip(tau, wt):
                ss = np.maximum(s - ts, 0.0)
                tq = np.maximum(t - tt, 0.0)
                xs = x[..., None, :] - offsets  # (..., q, d)
                vals = b.evaluator(ss[..., None, :], tq[..., None, :], xs)
                acc = acc + ws * wtt * np.tensordot(wx, np.moveaxis(vals, -2, 0), axes=(0, 0))
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return acc * _smooth_step(r / n - 1.0)

    return DriftSpec(ev, b.l1_inf_norm, True, d, 2.0 * n + 1.0 / n, f"{b.tag}@n={n}", b.bound,
                     b.autonomous, {"base": b.tag, "n": n})


@dataclass
class ConvergenceTable:
    """Ladder of mean-square differences between consecutive mollification levels."""

    rows: list[tuple[int, int, float, float]]
    warnings: list[str]

    def is_decreasing(self) -> bool:
        v = [r[2] for r in self.rows]
        return all(a > b for a, b in zip(v, v[1:]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_k", "n_k+1", "mean_sq_diff", "std_err"])
            for a, b_, m, se in self.rows:
                w.writerow([a, b_, repr(m), repr(se)])


def hurst_gate(h: HurstPair, d: int) -> bool:
    """Whether ``h1 + h2 < 1 / (2 (d + 1))``."""
    return h.h1 + h.h2 < 1.0 / (2 * (d + 1))


def noise_sample(grid: Grid2D, h: HurstPair, d: int, seed: int, route: str = "cholesky") -> np.ndarray:
    """Fractional-sheet noise values for one replication by the named route."""
    if route == "cholesky":
        return sample_fbs_cholesky(grid, h, d, seed).values
    if route == "kernel":
        return sample_fbs_kernel(grid, h, d, seed).values
    raise ValueError(f"unknown noise route {route!r}")


def _terminal_values(levels, x0, grid, h, d, seed, route) -> np.ndarray:
    WH = noise_sample(grid, h, d, seed, route)
    return np.array([euler_arrays(bn, x0, WH, grid)[:, -1, -1] for bn in levels])


def convergence_study(
    b: DriftSpec, x0, h: HurstPair, n_levels: Sequence[int], n_mc: int,
    grid: Grid2D | None = None, seed_base: int = 1, workers: int = 1, route: str = "cholesky",
) -> ConvergenceTable:
    """Mean-square differences ``E|X^{n_k}_{T,T} - X^{n_{k+1}}_{T,T}|^2``.

    Every replication drives all levels with the same noise, exact in law by
    default (``route="cholesky"``). If the Hurst pair violates
    ``h1 + h2 < 1/(2(d+1))`` a warning is recorded and the study still runs.
    """
    grid = grid or Grid2D.square(1.0, 32)
    notes = []
    if not hurst_gate(h, b.d):
        msg = f"h1 + h2 = {h.h1 + h.h2:g} is not below 1/(2(d+1)) = {1 / (2 * (b.d + 1)):g}"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    n_levels = list(n_levels)
    if len(n_levels) < 2:
        return ConvergenceTable([], notes)
    levels = [mollify_drift(b, n) for n in n_levels]
    x = _x0(x0, b.d)
    seeds = rng.replication_seeds(seed_base, "converge", n_mc)
    vals = rng.run_chunked(
        lambda ch: np.stack([_terminal_values(levels, x, grid, h, b.d, s, route) for s in ch]), seeds, workers
    )  # (n_mc, levels, d)
    rows = []
    for k in range(len(n_levels) - 1):
        sq = np.sum((vals[:, k] - vals[:, k + 1]) ** 2, axis=-1)
        m, se = rng.mean_and_se(sq)
        rows.append((n_levels[k], n_levels[k + 1], m, se))
    return ConvergenceTable(rows, notes)


@dataclass(frozen=True)
class MalliavinField:
    """``D_{r,u} X_{s,t}`` as a ``d x d`` matrix."""

    base_point: tuple[float, float]
    direction_point: tuple[float, float]
    matrix: np.ndarray


def kernel_seed(grid: Grid2D, r: float, u: float, h: HurstPair) -> np.ndarray:
    """``K_H(r, u; s_a, t_b)`` on every node, zero unless ``r < s_a`` and ``u < t_b``."""
    return np.outer(_k1(r, grid.s, h.h1), _k1(u, grid.t, h.h2))


def malliavin_response(b: DriftSpec, solution: SolutionSample, seed_field: np.ndarray) -> np.ndarray:
    """Solve ``D = seed I + Σ_{i<a, j<b} b'(X_ij) D_ij Δs Δt`` at every node.

    Returns an array of shape ``(n_s + 1, n_t + 1, d, d)``. A seed that
    vanishes at nodes not beyond some point keeps ``D`` zero there as well.
    """
    g = solution.grid
    d = solution.channels
    S, T = g.mesh()
    J = b.jacobian(S, T, np.moveaxis(solution.values, 0, -1))  # (ns+1, nt+1, d, d)
    Dm = np.zeros(g.shape + (d, d))
    eye = np.eye(d)
    acc = np.zeros((g.n_t + 1, d, d))
    area = g.ds * g.dt
    for a in range(g.n_s + 1):
        if a > 0:
            acc += J[a - 1] @ Dm[a - 1]
        Dm[a] = seed_field[a][:, None, None] * eye
        Dm[a, 1:] += np.cumsum(acc[:-1], axis=0) * area
    return Dm


def malliavin_values(b: DriftSpec, solution: SolutionSample, r: float, u: float, h: HurstPair) -> np.ndarray:
    """``D_{r,u} X`` at every node, shape ``(n_s + 1, n_t + 1, d, d)``.

    Uses the same lower-left corner rule as the solver; ``D`` vanishes at
    nodes that are not strictly beyond ``(r, u)``.
    """
    return malliavin_response(b, solution, kernel_seed(solution.grid, r, u, h))


def malliavin_derivative(
    b_smooth: DriftSpec, solution: SolutionSample, at: tuple[float, float], dir: tuple[float, float],
    h: HurstPair, eps: float | None = None,
) -> MalliavinField:
    """Malliavin derivative ``D_{r,u} X_{s,t}`` of a grid solution.

    ``at`` must be a grid node and ``dir = (r, u)`` must satisfy
    ``eps <= r < s`` and ``eps <= u < t``; ``eps`` defaults to ``0.1 T``.
    """
    g = solution.grid
    eps = 0.1 * g.t_max if eps is None else eps
    s, t = at
    r, u = dir
    if not (eps <= r < s and eps <= u < t):
        raise DomainError(f"need {eps:g} <= r < s and {eps:g} <= u < t, got (r, u)={dir}, (s, t)={at}")
    i, j = g.node_index(s, t)
    Dm = malliavin_values(b_smooth, solution, r, u, h)
    return MalliavinField((s, t), (r, u), Dm[i, j].copy())


def malliavin_series(lam: float, grid: Grid2D, r: float, u: float, h: HurstPair, terms: int = 6) -> np.ndarray:
    """Truncated Picard series for ``d = 1`` and constant ``b' = lam``.

    Returns ``Σ_{k<terms} lam^k V^k K_H`` with ``V f(a, b) = Σ_{i<a, j<b} f_ij Δs Δt``.
    """
    term = kernel_seed(grid, r, u, h)
    total = term.copy()
    area = grid.ds * grid.dt
    for _ in range(1, terms):
        nxt = np.zeros_like(term)
        nxt[1:, 1:] = np.cumsum(np.cumsum(term[:-1, :-1], axis=0), axis=1) * area
        term = lam * nxt
        total += term
    return total


def malliavin_fd_check(
    b_smooth: DriftSpec, x0, h: HurstPair, dir_rect: tuple[float, float, float, float],
    eps: float = 1e-3, seed: int = 1, grid: Grid2D | None = None,
) -> tuple[float, float]:
    """Finite-difference check of the Malliavin equation at ``(T, T)``.

    The driving Brownian sheet is shifted along the Cameron--Martin direction
    with density ``1_R / |R|`` for ``R = [r0, r1] x [u0, u1]`` (snapped to grid
    cells), scaled by ``eps``: each cell inside ``R`` gains ``eps / #cells``.
    The noise is rebuilt through the kernel route and the solve repeated.

    Returns
    -------
    (difference, prediction)
        ``X^eps_{T,T} - X_{T,T}`` (channel 0) and ``eps`` times the Malliavin
        derivative averaged over ``R``. The derivative is linear in its kernel
        seed, so the average is the response to the kernel averaged over
        ``R``; the singular kernel is averaged cell by cell.
    """
    grid = grid or Grid2D.square(1.0, 32)
    r0, u0, r1, u1 = dir_rect
    if not (0 < r0 < r1 < grid.t_max and 0 < u0 < u1 < grid.t_max):
        raise DomainError(f"rectangle {dir_rect} must lie inside (0, T)^2")
    i0, i1 = int(round(r0 / grid.ds)), int(round(r1 / grid.ds))
    j0, j1 = int(round(u0 / grid.dt)), int(round(u1 / grid.dt))
    if i1 <= i0 or j1 <= j0:
        raise DomainError(f"rectangle {dir_rect} contains no full grid cell")
    route = kernel_route(grid, h, grid.n_s, grid.n_t)
    d = b_smooth.d
    x = _x0(x0, d)
    dW = brownian_increments(route.sim_grid, d, seed)
    X = euler_arrays(b_smooth, x, route.apply(dW), grid)
    ncell = (i1 - i0) * (j1 - j0)
    dWp = dW.copy()
    dWp[:, i0:i1, j0:j1] += eps / ncell
    Xp = euler_arrays(b_smooth, x, route.apply(dWp), grid)
    fd = float(Xp[0, -1, -1] - X[0, -1, -1])
    sol = SolutionSample(grid, x, X, seed, b_smooth.tag)
    seed_avg = np.outer(route.A_s[:, i0:i1].mean(axis=1), route.A_t[:, j0:j1].mean(axis=1))
    Dm = malliavin_response(b_smooth, sol, seed_avg)
    return fd, float(eps * Dm[-1, -1, 0, :].sum())


def _mesh_terminals(b: DriftSpec, x0, h: HurstPair, ns: Sequence[int], n_sim: int, t_max: float, seed: int):
    out = []
    for n in ns:
        grid = Grid2D.square(t_max, n)
        route = kernel_route(grid, h, n_sim, n_sim)
        WH = route.apply(brownian_increments(route.sim_grid, b.d, seed))
        out.append(euler_arrays(b, x0, WH, grid)[:, -1, -1])
    return np.array(out)


def mesh_ladder(
    b: DriftSpec, x0, h: HurstPair, ns: Sequence[int], n_mc: int, t_max: float = 1.0,
    seed_base: int = 1, workers: int = 1,
) -> ConvergenceTable:
    """Mean-square differences of ``X_{T,T}`` between consecutive grid sizes.

    All grids are driven by the same Brownian sheet on the finest simulation
    grid, so consecutive rows compare solutions for identical noise.
    """
    ns = list(ns)
    n_sim = max(sim_cells_for(n) for n in ns)
    if any(n_sim % n for n in ns):
        raise PreconditionError(f"grid sizes {ns} must divide the simulation size {n_sim}")
    x = _x0(x0, b.d)
    seeds = rng.replication_seeds(seed_base, "mesh", n_mc)
    vals = rng.run_chunked(
        lambda ch: np.stack([_mesh_terminals(b, x, h, ns, n_sim, t_max, s) for s in ch]), seeds, workers
    )
    rows = []
    for k in range(len(ns) - 1):
        m, se = rng.mean_and_se(np.sum((vals[:, k] - vals[:, k + 1]) ** 2, axis=-1))
        rows.append((ns[k], ns[k + 1], m, se))
    return ConvergenceTable(rows, [])
