"""Gaussian computations around the fractional sheet.

Conditional variances and the sectorial local nondeterminism ratio, the
permanent bound on absolute moments, a Gaussian Fourier identity, the
determinant inequality for Hadamard products, and a one-dimensional check of
the Fourier integration-by-parts identity along sheet paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_hermite

from . import rng
from .errors import AccuracyError, NumericalError, PreconditionError, SizeCapError
from .grid import Grid2D
from .kernel import CovMatrix, HurstPair, _fbm_cov, cov_matrix
from .sim import sample_fbs_kernel

#: Largest matrix accepted by :func:`permanent`.
PERMANENT_CAP = 12
#: Largest point set accepted by :func:`det_lower_bound_check`.
DET_CAP = 12


@dataclass(frozen=True)
class PointSet2D:
    """Distinct points of ``[epsilon, T]^2``."""

    points: tuple
    epsilon: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if np.any(P < self.epsilon):
            raise PreconditionError(f"all coordinates must be >= {self.epsilon}")
        if len({tuple(p) for p in P}) != len(P):
            raise PreconditionError("points must be pairwise distinct")
        object.__setattr__(self, "points", tuple(map(tuple, P)))

    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.points)


def _as_points(p) -> np.ndarray:
    if isinstance(p, PointSet2D):
        return p.array()
    return np.asarray(p, dtype=float).reshape(-1, 2)


def conditional_variance(target: Sequence[float], conditioners, h: HurstPair) -> float:
    """``Var[W_target | W_p, p in conditioners]`` for one channel (Schur complement)."""
    P = _as_points(conditioners)
    var = (target[0] ** (2 * h.h1)) * (target[1] ** (2 * h.h2))
    if len(P) == 0:
        return float(var)
    C = cov_matrix(P, h)
    c = _fbm_cov(P[:, 0], target[0], h.h1) * _fbm_cov(P[:, 1], target[1], h.h2)
    y = np.linalg.solve(C.cholesky(), c)
    return float(var - y @ y)


def slnd_ratio(target: Sequence[float], conditioners, h: HurstPair) -> float:
    """Conditional variance over ``min|s - s_k|^{2h1} + min|t - t_k|^{2h2}``.

    The minima run over the conditioners together with ``s_0 = t_0 = 0``.
    """
    P = _as_points(conditioners)
    s, t = float(target[0]), float(target[1])
    if any(abs(p[0] - s) == 0 and abs(p[1] - t) == 0 for p in P):
        raise PreconditionError("target coincides with a conditioner")
    ss = np.concatenate([[0.0], P[:, 0]])
    tt = np.concatenate([[0.0], P[:, 1]])
    denom = np.min(np.abs(s - ss)) ** (2 * h.h1) + np.min(np.abs(t - tt)) ** (2 * h.h2)
    assert denom > 0, "zero SLND denominator"
    return conditional_variance((s, t), P, h) / float(denom)


@dataclass
class SlndReport:
    """Outcome of a randomized search for the smallest SLND ratio."""

    h: HurstPair
    trials: int
    infimum: float
    worst_target: tuple
    worst_conditioners: list
    all_positive: bool

    def to_dict(self) -> dict:
        return {
            "h": [self.h.h1, self.h.h2],
            "trials": self.trials,
            "infimum": self.infimum,
            "worst_target": list(self.worst_target),
            "worst_conditioners": [list(p) for p in self.worst_conditioners],
            "all_positive": self.all_positive,
        }


def slnd_search(
    h: HurstPair, trials: int = 1000, max_points: int = 6, epsilon: float = 0.2,
    t_max: float = 1.0, seed_base: int = 1,
) -> SlndReport:
    """Random configurations in ``[epsilon, t_max]^2`` with up to ``max_points`` conditioners."""
    if max_points > 6:
        raise SizeCapError("at most 6 conditioners are supported")
    best = (math.inf, None, None)
    positive = True
    for k in range(trials):
        gen = rng.stream(rng.derive_seed(seed_base, "slnd", k))
        n = int(gen.integers(1, max_points + 1))
        pts = epsilon + (t_max - epsilon) * rng.uniforms(gen, (n + 1, 2))
        target, cond = pts[0], pts[1:]
        r = slnd_ratio(target, cond, h)
        positive &= r > 0
        if r < best[0]:
            best = (r, tuple(target), [tuple(p) for p in cond])
    return SlndReport(h, trials, float(best[0]), best[1], best[2], bool(positive))


def det_lower_bound_check(pts, h: HurstPair) -> tuple[float, float]:
    """``(det Cov(W^H_{p_i}), det R_{h1}(s_i, s_j) * det R_{h2}(t_i, t_j))``.

    The sheet covariance is the Hadamard product of the two factors, so the
    first value is at least the second.
    """
    P = _as_points(pts)
    n = len(P)
    if n > DET_CAP:
        raise SizeCapError(f"{n} points exceed the determinant cap {DET_CAP}")
    if n == 0:
        raise PreconditionError("need at least one point")
    A = _fbm_cov(P[:, 0][:, None], P[:, 0][None, :], h.h1)
    B = _fbm_cov(P[:, 1][:, None], P[:, 1][None, :], h.h2)
    return float(np.linalg.det(A * B)), float(np.linalg.det(A) * np.linalg.det(B))


def permanent(m) -> float:
    """Exact permanent by Ryser's inclusion--exclusion formula with a Gray code."""
    A = np.asarray(m, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("permanent needs a square matrix")
    n = A.shape[0]
    if n > PERMANENT_CAP:
        raise SizeCapError(f"{n}x{n} exceeds the permanent cap {PERMANENT_CAP}")
    if n == 0:
        return 1.0
    row_sums = np.zeros(n)
    total = 0.0
    gray_prev = 0
    for k in range(1, 2**n):
        gray = k ^ (k >> 1)
        j = (gray ^ gray_prev).bit_length() - 1
        row_sums += A[:, j] if gray & (1 << j) else -A[:, j]
        gray_prev = gray
        sign = -1.0 if bin(gray).count("1") % 2 else 1.0
        total += sign * np.prod(row_sums)
    return float((-1) ** n * total)


@dataclass(frozen=True)
class AbsMomentReport:
    estimate: float
    std_error: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.estimate <= self.bound + 3 * self.std_error


def abs_moment_vs_permanent(sigma, n_mc: int = 100_000, seed: int = 1) -> AbsMomentReport:
    """Monte-Carlo ``E[|X_1| ... |X_n|]`` for ``X ~ N(0, Σ)`` against ``sqrt(perm Σ)``."""
    S = sigma.entries if isinstance(sigma, CovMatrix) else np.asarray(sigma, dtype=float)
    n = S.shape[0]
    if n > 8:
        raise SizeCapError("abs_moment_vs_permanent supports n <= 8")
    L = CovMatrix(np.zeros((n, 2)), S).cholesky()
    Z = rng.normals(rng.stream(rng.derive_seed(seed, "absmoment")), (n_mc, n))
    prods = np.prod(np.abs(Z @ L.T), axis=1)
    est, se = rng.mean_and_se(prods)
    return AbsMomentReport(est, se, math.sqrt(max(permanent(S), 0.0)))


def gaussian_identity_check(cov, g: Callable[[np.ndarray], np.ndarray], quad_n: int = 40) -> tuple[float, float]:
    r"""Both sides of the Gaussian identity

    .. math:: \int_{\mathbb R^n} g(v_1) e^{-\frac12 v^T \Sigma v}\,dv
              = \frac{(2\pi)^{(n-1)/2}}{\sqrt{\det\Sigma}} \int_{\mathbb R}
                g(v/\sigma_1) e^{-v^2/2}\,dv,

    where :math:`\sigma_1^2` is the variance of the first variable given the
    others. The left side uses tensor Gauss--Hermite quadrature after
    whitening, the right side adaptive quadrature.
    """
    S = cov.entries if isinstance(cov, CovMatrix) else np.asarray(cov, dtype=float)
    n = S.shape[0]
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance is not positive definite") from exc
    det = float(np.prod(np.diag(L)) ** 2)
    x, w = roots_hermite(quad_n)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    X = np.stack([gg.ravel() for gg in grids], axis=-1) * math.sqrt(2.0)
    W = np.prod(np.meshgrid(*([w] * n), indexing="ij"), axis=0).ravel()
    V = np.linalg.solve(L.T, X.T).T  # v = L^{-T} sqrt(2) x
    lhs = 2 ** (n / 2) / math.sqrt(det) * float(np.dot(W, g(V[:, 0])))
    if n == 1:
        sigma1 = math.sqrt(S[0, 0])
    else:
        sigma1 = math.sqrt(1.0 / np.linalg.inv(S)[0, 0])
    val, _ = quad(lambda v: g(np.asarray(v / sigma1)) * math.exp(-0.5 * v * v), -np.inf, np.inf,
                  epsabs=1e-13, epsrel=1e-12, limit=400)
    rhs = (2 * math.pi) ** ((n - 1) / 2) / math.sqrt(det) * val
    return float(lhs), float(rhs)


@dataclass(frozen=True)
class IbpTestFunction:
    """Test function ``f(s, t, z)`` with its ``z``-derivative.

    ``center`` and ``width`` describe where ``f`` is concentrated in ``z``
    and set the extent of the Fourier grid.
    """

    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    dz: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    center: float = 0.0
    width: float = 1.0

    def derivative(self, alpha: int):
        if alpha == 0:
            return self.f
        if alpha == 1:
            return self.dz
        raise ValueError("only alpha in {0, 1} is supported")


def gaussian_bump_test(amp: float = 1.0, center: float = 0.0, width: float = 0.5) -> IbpTestFunction:
    """``f(s, t, z) = amp (1 + s t) exp(-(z - center)^2 / (2 width^2))``."""

    def f(s, t, z):
        return amp * (1 + s * t) * np.exp(-0.5 * ((z - center) / width) ** 2)

    def dz(s, t, z):
        return -(z - center) / width**2 * f(s, t, z)

    return IbpTestFunction(f, dz, center, width)


def zero_test() -> IbpTestFunction:
    zero = lambda s, t, z: np.zeros(np.broadcast_shapes(np.shape(s), np.shape(z)))
    return IbpTestFunction(zero, zero)


def _trapezoid_weights(n: int, d: float) -> np.ndarray:
    w = np.full(n + 1, d)
    w[[0, -1]] = d / 2
    return w


def ibp_sides(
    test: IbpTestFunction, alpha: int, S: np.ndarray, T: np.ndarray, W: np.ndarray, weights: np.ndarray,
    tail_tol: float = 1e-6, max_refine: int = 8,
) -> tuple[float, float]:
    """Both sides of the integration-by-parts identity on given quadrature nodes.

    The left side is ``Σ w D^alpha f(s, t, W)``. The right side is

    ``(2π)^{-1} ∫ (-iv)^alpha Σ w f̂(s, t, v) e^{-ivW} dv`` with
    ``f̂(v) = ∫ f(z) e^{ivz} dz``, where the ``z`` transform is taken by FFT on
    a grid wide enough to hold ``f`` and the paths, refined until the
    spectrum outside the resolved band is below ``tail_tol``.

    Raises
    ------
    AccuracyError
        If ``f`` does not decay on the grid or the spectrum tail stays above
        ``tail_tol``.
    """
    s, t, w, x = S.ravel(), T.ravel(), weights.ravel(), W.ravel()
    lhs = float(np.dot(w, test.derivative(alpha)(s, t, x)))
    half = max(abs(test.center) + 12 * test.width, float(np.max(np.abs(x))) + 12 * test.width)
    N = 256
    for _ in range(max_refine):
        dz = 2 * half / N
        z = -half + dz * np.arange(N)
        F = test.f(s[:, None], t[:, None], z[None, :])
        scale = max(float(np.max(np.abs(F))), 1e-300)
        if np.max(np.abs(F[:, [0, -1]])) > tail_tol * scale:
            raise AccuracyError("test function does not decay on the Fourier grid")
        v = 2 * np.pi * np.fft.fftfreq(N, d=dz)
        # f̂(v) = Σ f(z_n) e^{i v z_n} dz
        Fh = np.fft.ifft(F, axis=1) * N * dz * np.exp(1j * v * z[0])
        band = np.abs(v) > 0.75 * np.max(np.abs(v))
        tail = float(np.max(np.abs(Fh[:, band] * np.abs(v[band]) ** alpha)))
        if tail <= tail_tol * max(float(np.max(np.abs(Fh))), 1e-300) or scale == 1e-300:
            break
        N *= 2
    else:
        raise AccuracyError(f"Fourier tail mass {tail:g} above {tail_tol:g}")
    dv = 2 * np.pi / (N * dz)
    mult = (-1j * v) ** alpha
    phase = np.exp(-1j * np.outer(x, v))
    rhs = np.sum(w @ (Fh * phase) * mult) * dv / (2 * np.pi)
    return lhs, float(rhs.real)


def ibp_check(
    test: IbpTestFunction, rect: Sequence[float], h: HurstPair, seed: int, alpha: int = 1,
    grid: Grid2D | None = None,
) -> tuple[float, float]:
    """Integration by parts along one fractional-sheet path (one dimension).

    ``rect = (r̄, ū, s̄, t̄)`` is snapped to grid nodes; the path is the
    kernel-route sample with ``seed``. Returns ``(lhs, rhs)``.
    """
    grid = grid or Grid2D.square(1.0, 32)
    r0, u0, r1, u1 = rect
    i0, i1 = int(round(r0 / grid.ds)), int(round(r1 / grid.ds))
    j0, j1 = int(round(u0 / grid.dt)), int(round(u1 / grid.dt))
    if not (0 <= i0 < i1 <= grid.n_s and 0 <= j0 < j1 <= grid.n_t):
        raise PreconditionError(f"rectangle {rect} does not span a grid cell")
    W = sample_fbs_kernel(grid, h, 1, seed).values[0, i0:i1 + 1, j0:j1 + 1]
    S, T = np.meshgrid(grid.s[i0:i1 + 1], grid.t[j0:j1 + 1], indexing="ij")
    wts = np.outer(_trapezoid_weights(i1 - i0, grid.ds), _trapezoid_weights(j1 - j0, grid.dt))
    return ibp_sides(test, alpha, S, T, W, wts)
