"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate
from scipy.special import gamma


def permanent_bruteforce(a) -> float:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    return float(sum(np.prod([a[i, p[i]] for i in range(n)]) for p in itertools.permutations(range(n))))


def kernel_1d_quad(r: float, s: float, h: float) -> float:
    """Molchan kernel by adaptive quadrature with the endpoint weight handled by QUADPACK."""
    c = math.sqrt(2 * h / ((1 - 2 * h) * math.gamma(1 - 2 * h) * math.gamma(h + 0.5) / math.gamma(1.5 - h)))
    F = (s / r) ** (h - 0.5) * (s - r) ** (h - 0.5)
    # (u - r)^(h - 1/2) is the algebraic endpoint weight at u = r
    inner, _ = integrate.quad(lambda u: (u / r) ** (h - 0.5) / u, r, s, weight="alg", wvar=(h - 0.5, 0.0),
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    return c * (F + (0.5 - h) * inner)


def frac_integral_quad_1d(f, x: float, alpha: float) -> float:
    """Riemann-Liouville integral at one point by QUADPACK with the singular weight."""
    if x <= 0:
        return 0.0
    val, _ = integrate.quad(f, 0.0, x, weight="alg", wvar=(0.0, alpha - 1.0), epsabs=1e-13, epsrel=1e-12)
    return val / gamma(alpha)


def second_difference_derivative(F: np.ndarray, ds: float, dt: float) -> np.ndarray:
    """Mixed partial of node values by centered differences (interior nodes only)."""
    out = np.full_like(F, np.nan)
    out[1:-1, 1:-1] = (F[2:, 2:] - F[2:, :-2] - F[:-2, 2:] + F[:-2, :-2]) / (4 * ds * dt)
    return out


def fbm_cov(a, b, h):
    return 0.5 * (np.abs(a) ** (2 * h) + np.abs(b) ** (2 * h) - np.abs(a - b) ** (2 * h))


def kernel_covariance_quad(p1, p2, h: tuple[float, float]) -> float:
    """``∫∫ K(u,v; p1) K(u,v; p2)`` as a product of two 1D QUADPACK integrals."""
    out = 1.0
    for axis, hh in enumerate(h):
        a, b = p1[axis], p2[axis]
        lo = min(a, b)
        val, _ = integrate.quad(lambda r: kernel_1d_quad(r, a, hh) * kernel_1d_quad(r, b, hh), 0.0, lo,
                                limit=400, epsabs=1e-10, epsrel=1e-8)
        out *= val
    return out


def simplex_volume(m: int, length: float = 1.0) -> float:
    return length**m / math.factorial(m)
