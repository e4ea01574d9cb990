r"""Volterra kernel of the fractional Brownian sheet and related operators.

For :math:`0 < h < 1/2` the one-parameter kernel is

.. math:: K_h(r, s) = c_h\Big[F_h(r, s) + (\tfrac12 - h)\int_r^s \frac{F_h(r, u)}{u}\,du\Big],
          \qquad F_h(r, s) = (s/r)^{h-1/2}(s-r)^{h-1/2},

for ``0 < r < s`` and zero otherwise, with
:math:`c_h = \sqrt{2h / ((1-2h) B(1-2h, h+1/2))}`. The inner integral has the
closed form :math:`r^{h-1/2} B(1-2h, h+1/2)(1 - I_{r/s}(1-2h, h+1/2))` in
terms of the regularized incomplete Beta function, which is what we evaluate.

Argument convention: every kernel function takes the evaluation point first
and the endpoint second, so ``kernel_2d(r, u, s, t, h)`` is the kernel at
``(r, u)`` for the endpoint ``(s, t)``. The sheet is then
``W^H(s, t) = \int_0^s \int_0^t K_H(r, u; s, t) W(dr, du)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, gamma, roots_jacobi
from scipy.signal import correlate

from .errors import DomainError, InvalidOrderError, NumericalError
from .frac_calc import FracOrder2D, frac_integral_2d
from .grid import SampledFn2D


@dataclass(frozen=True)
class HurstPair:
    """Anisotropic Hurst index ``(h1, h2)`` with both entries in (0, 1/2)."""

    h1: float
    h2: float

    def __post_init__(self):
        for h in (self.h1, self.h2):
            if not 0 < h < 0.5:
                raise InvalidOrderError(f"Hurst indices must lie in (0, 1/2), got ({self.h1}, {self.h2})")

    def __iter__(self):
        yield self.h1
        yield self.h2


@dataclass(frozen=True)
class KernelEval:
    """A kernel value together with the points it was evaluated at."""

    eval_point: tuple[float, float]
    end_point: tuple[float, float]
    value: float


def _check_h(h: float) -> None:
    if not 0 < h < 0.5:
        raise InvalidOrderError(f"Hurst index must lie in (0, 1/2), got {h}")


def f_alpha(r: float, s: float, alpha: float) -> float:
    """``(s/r)^(alpha-1/2) (s-r)^(alpha-1/2)`` for ``r < s``, zero for ``r > s``."""
    if not (r > 0 and s > 0):
        raise DomainError(f"f_alpha needs r > 0 and s > 0, got r={r}, s={s}")
    if not 0 < alpha < 0.5:
        raise InvalidOrderError(f"alpha must lie in (0, 1/2), got {alpha}")
    if r == s:
        raise DomainError("on-diagonal singularity: r == s")
    if r > s:
        return 0.0
    return float((s / r) ** (alpha - 0.5) * (s - r) ** (alpha - 0.5))


def kernel_constant(h: float) -> float:
    """Normalizing constant ``c_h`` of the one-parameter kernel."""
    _check_h(h)
    return float(np.sqrt(2 * h / ((1 - 2 * h) * beta_fn(1 - 2 * h, h + 0.5))))


def inverse_normalization(h: float) -> float:
    """Factor ``1 / (c_h Gamma(h + 1/2))`` making the scaled-integral inverse exact.

    With ``theta = s^(h-1/2) I^(1/2-h)[u^(1/2-h) phi']``, the forward transform
    gives ``int_0^s K_h(r, s) theta(r) dr = c_h Gamma(h + 1/2) phi(s)``.
    """
    return 1.0 / (kernel_constant(h) * gamma(h + 0.5))


def _k1(r, s, h: float):
    # Vectorized kernel without argument checks; zero where r >= s or r <= 0.
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    r, s = np.broadcast_arrays(r, s)
    out = np.zeros(r.shape)
    m = (r > 0) & (r < s)
    if np.any(m):
        rm, sm = r[m], s[m]
        a, b = 1 - 2 * h, h + 0.5
        F = (sm / rm) ** (h - 0.5) * (sm - rm) ** (h - 0.5)
        inner = rm ** (h - 0.5) * beta_fn(a, b) * (1.0 - betainc(a, b, rm / sm))
        out[m] = kernel_constant(h) * (F + (0.5 - h) * inner)
    return out


def _k1_quadrature(r: float, s: float, h: float, n: int = 4000) -> float:
    # Inner integral via u = r + (s - r) w^2 and the midpoint rule in w.
    w = (np.arange(n) + 0.5) / n
    u = r + (s - r) * w * w
    integrand = (u / r) ** (h - 0.5) * (s - r) ** (h - 0.5) * w ** (2 * h) * 2 * (s - r) / u
    inner = integrand.mean()
    F = (s / r) ** (h - 0.5) * (s - r) ** (h - 0.5)
    return kernel_constant(h) * (F + (0.5 - h) * inner)


def kernel_1d(r: float, s: float, h: float, method: str = "closed") -> float:
    """One-parameter kernel ``K_h(r, s)`` for ``0 < r < s``.

    Parameters
    ----------
    method : {"closed", "quadrature"}
        ``"closed"`` uses the incomplete Beta form of the inner integral;
        ``"quadrature"`` integrates it numerically after the substitution
        ``u = r + (s - r) w^2``.
    """
    _check_h(h)
    if not (0 < r < s):
        raise DomainError(f"kernel_1d needs 0 < r < s, got r={r}, s={s}")
    if method == "closed":
        return float(_k1(r, s, h))
    if method == "quadrature":
        return float(_k1_quadrature(r, s, h))
    raise ValueError(f"unknown method {method!r}")


def kernel_2d(r: float, u: float, s: float, t: float, h: HurstPair) -> float:
    """Kernel of the sheet at ``(r, u)`` for the endpoint ``(s, t)``."""
    return kernel_1d(r, s, h.h1) * kernel_1d(u, t, h.h2)


def _fbm_cov(a, b, h: float):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 0.5 * (a ** (2 * h) + b ** (2 * h) - np.abs(a - b) ** (2 * h))


def covariance(p1: Sequence[float], p2: Sequence[float], h: HurstPair) -> float:
    """Covariance of one channel of the sheet at two points."""
    return float(_fbm_cov(p1[0], p2[0], h.h1) * _fbm_cov(p1[1], p2[1], h.h2))


@dataclass
class CovMatrix:
    """Covariance of the sheet over a finite point set.

    ``jitter`` records the diagonal shift that was needed for the Cholesky
    factor to exist (zero if none).
    """

    points: np.ndarray
    entries: np.ndarray
    jitter: float = 0.0
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def cholesky(self, retries: int = 3) -> np.ndarray:
        """Lower Cholesky factor, adding diagonal jitter if needed.

        The first retry adds ``1e-12 * trace / n``; each later retry multiplies
        the jitter by 10.

        Raises
        ------
        NumericalError
            If every attempt fails.
        """
        if self._chol is not None:
            return self._chol
        A = self.entries
        try:
            self._chol = np.linalg.cholesky(A)
            return self._chol
        except np.linalg.LinAlgError:
            pass
        jit = 1e-12 * max(np.trace(A), 1e-300) / self.n
        for _ in range(retries):
            try:
                self._chol = np.linalg.cholesky(A + jit * np.eye(self.n))
                self.jitter = jit
                return self._chol
            except np.linalg.LinAlgError:
                jit *= 10
        raise NumericalError(f"Cholesky failed after {retries} jitter retries (last jitter {jit / 10:g})")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# points", self.n])
            w.writerow(["s", "t"])
            for s, t in self.points:
                w.writerow([repr(float(s)), repr(float(t))])
            w.writerow(["# matrix", self.n])
            for row in self.entries:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "CovMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        n = int(rows[0][1])
        pts = np.array(rows[2:2 + n], dtype=float).reshape(n, 2)
        ent = np.array(rows[3 + n:3 + 2 * n], dtype=float).reshape(n, n)
        return cls(pts, ent)


def cov_matrix(points, h: HurstPair) -> CovMatrix:
    """Pairwise covariance matrix of the sheet over ``points``."""
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    if P.shape[0] == 0:
        raise ValueError("cov_matrix needs at least one point")
    s, t = P[:, 0], P[:, 1]
    C = _fbm_cov(s[:, None], s[None, :], h.h1) * _fbm_cov(t[:, None], t[None, :], h.h2)
    C = 0.5 * (C + C.T)
    return CovMatrix(P, C)


def kstar_indicator(rect: Sequence[float], at: Sequence[float], h: HurstPair) -> float:
    """``K_H^*`` applied to the indicator of ``[0, s] x [0, t]``, evaluated at ``at``."""
    s, t = rect
    s1, t1 = at
    if 0 < s1 < s and 0 < t1 < t:
        return kernel_2d(s1, t1, s, t, h)
    return 0.0


def kh_inverse_field(phi_density: SampledFn2D, h: HurstPair, normalized: bool = False) -> SampledFn2D:
    r"""Scaled-integral inverse of the kernel transform on a grid.

    Computes :math:`s^{h_1-1/2} t^{h_2-1/2} I^{1/2-h_1, 1/2-h_2}[u^{1/2-h_1}
    v^{1/2-h_2}\,\varphi_{st}](s, t)` where ``phi_density`` holds the mixed
    derivative :math:`\varphi_{st}`. With ``normalized=True`` the result is
    multiplied by :func:`inverse_normalization` in each variable, which makes
    it the exact inverse of the normalized kernel used by the samplers.
    """
    g = phi_density.grid
    S, T = g.mesh()
    a, b = 0.5 - h.h1, 0.5 - h.h2
    scaled = SampledFn2D(g, S ** a * T ** b * phi_density.values)
    I = frac_integral_2d(scaled, FracOrder2D(a, b)).values
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where((S > 0) & (T > 0), S ** (-a) * T ** (-b) * I, 0.0)
    if normalized:
        out = out * inverse_normalization(h.h1) * inverse_normalization(h.h2)
    return SampledFn2D(g, out)


def constant_theta(c: float, s: float, t: float, h: HurstPair) -> float:
    """Closed form of the scaled-integral inverse for a constant density ``c``."""
    a, b = 0.5 - h.h1, 0.5 - h.h2
    return float(c * gamma(1 + a) * gamma(1 + b) / (gamma(1 + 2 * a) * gamma(1 + 2 * b)) * s ** a * t ** b)


def _cell_integral(lo: float, hi: float, s: float, h: float, order: int) -> float:
    # Gauss-Jacobi on [lo, hi], absorbing the endpoint singularities at 0 and s.
    e = h - 0.5
    a_right = e if hi >= s else 0.0
    b_left = e if lo <= 0.0 else 0.0
    x, w = roots_jacobi(order, a_right, b_left)
    half = 0.5 * (hi - lo)
    u = lo + half * (x + 1.0)
    g = _k1(u, s, h)
    if a_right:
        g = g * ((hi - u) / half) ** (-a_right)
    if b_left:
        g = g * ((u - lo) / half) ** (-b_left)
    return float(half * np.dot(w, g))


@lru_cache(maxsize=32)
def cell_average_weights(n_eval: int, n_cells: int, t_max: float, h: float, order: int = 16) -> np.ndarray:
    """Cell-averaged kernel ``A[k, c] = (1/Δ) ∫_{cell c ∩ [0, s_k]} K_h(u, s_k) du``.

    Rows are the evaluation nodes ``s_k = k t_max / n_eval`` (row 0 is zero);
    columns are the ``n_cells`` simulation cells of width ``Δ = t_max / n_cells``.
    ``A @ ΔW`` is the conditional expectation of the kernel integral given the
    cell increments of the driving Brownian motion.
    """
    _check_h(h)
    d = t_max / n_cells
    edges = np.arange(n_cells + 1) * d
    A = np.zeros((n_eval + 1, n_cells))
    for k in range(1, n_eval + 1):
        s = k * t_max / n_eval
        for c in range(n_cells):
            lo = edges[c]
            if lo >= s * (1 - 1e-12):
                break
            hi = min(edges[c + 1], s)
            if abs(hi - s) < 1e-12 * s:
                hi = s
            A[k, c] = _cell_integral(lo, hi, s, h, order) / d
    A.setflags(write=False)
    return A


def _offset_sums(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sums over ordered index pairs at offset ``p = |i - i'|``.

    Returns ``S[p] = sum k_i^2`` and ``C[p] = sum k_i k_i'``.
    """
    n = k.size
    c = correlate(k, k, mode="full", method="auto")[n - 1:]
    sq = np.concatenate([[0.0], np.cumsum(k * k)])
    p = np.arange(n)
    S = sq[n - p] + (sq[n] - sq[p])
    C = 2.0 * c
    S[0] *= 0.5
    C[0] *= 0.5
    return S, C


def increment_sobolev_integral(h: HurstPair, s: float, t: float, beta: float, mesh: int) -> float:
    r"""Midpoint approximation of the kernel-increment Sobolev integral.

    .. math:: \iint\!\iint \frac{|K_H(r,u; s,t) - K_H(\bar r,\bar u; s,t)|^2}
              {(|r-\bar r| + |u-\bar u|)^{2+2\beta}}

    over :math:`[\delta, s]^2 \times [\delta, t]^2` with one mesh cell as
    :math:`\delta`. Distances are divided by ``2 max(s, t)`` so that they are
    at most one, which makes the value non-decreasing in ``beta``. Cells with
    ``(r, u) == (r̄, ū)`` are skipped.

    The midpoint weight depends only on the index offsets and the kernel
    factorizes, so the four-fold sum collapses to a double sum over offsets
    (``O(mesh^2)`` instead of ``O(mesh^4)``).
    """
    if not 0 < beta < 0.5:
        raise InvalidOrderError(f"beta must lie in (0, 1/2), got {beta}")
    if mesh < 4:
        raise ValueError(f"mesh must be at least 4, got {mesh}")
    ds, dt = s / mesh, t / mesh
    r = ds * (np.arange(1, mesh) + 0.5)
    u = dt * (np.arange(1, mesh) + 0.5)
    S1, C1 = _offset_sums(_k1(r, s, h.h1))
    S2, C2 = _offset_sums(_k1(u, t, h.h2))
    scale = 2.0 * max(s, t)
    dd = (np.arange(S1.size)[:, None] * ds + np.arange(S2.size)[None, :] * dt) / scale
    with np.errstate(divide="ignore"):
        wgt = np.where(dd > 0, dd ** (-(2 + 2 * beta)), 0.0)
    total = 2.0 * (S1 @ wgt @ S2) - 2.0 * (C1 @ wgt @ C2)
    return float(total * (ds * dt) ** 2)


def load_kernel_constants() -> dict[str, float]:
    """Regression constants shipped with the package, keyed by name."""
    text = resources.files("fbsheet").joinpath("data/kernel_constants.txt").read_text()
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, val = line.split("=")
        out[key.strip()] = float(val)
    return out
