r"""Shuffle permutations and Beta-chain integrals over ordered simplices.

A shuffle of ``k`` blocks of size ``m`` is a permutation ``σ`` of
``{1, ..., mk}`` that is increasing on each block of consecutive positions.
The cells

.. math:: \nabla^{mk,\sigma}_{r,s} = \{x : (x_{\sigma^{-1}(1)}, \ldots,
          x_{\sigma^{-1}(mk)}) \text{ strictly decreasing in } (r, s)\}

indexed by shuffles partition (up to ties) the product of ``k`` ordered
simplices of dimension ``m``.

The Beta-chain integral is

.. math:: \int_{r < s_m < \cdots < s_1 < s} \prod_{j=1}^m (s_j - r)^{a_j}
          |s_j - s_{j+1}|^{v_j}\,ds, \qquad s_{m+1} = r,

which iterated Beta integrals reduce to a product of Gamma ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gammaln

from . import rng
from .errors import PreconditionError, SizeCapError

#: Largest ``m k`` accepted by the shuffle routines.
SHUFFLE_CAP = 10


@dataclass(frozen=True)
class ShuffleSet:
    """All shuffles of ``k`` blocks of size ``m``, one per row, values 1-based."""

    m: int
    k: int
    perms: np.ndarray

    def __len__(self) -> int:
        return self.perms.shape[0]

    @property
    def expected_count(self) -> int:
        return math.factorial(self.m * self.k) // math.factorial(self.m) ** self.k


def enumerate_shuffles(m: int, k: int) -> ShuffleSet:
    """Shuffles in lexicographic order.

    Block ``i`` receives an ``m``-subset of the values not used by earlier
    blocks, in increasing order; running through subsets lexicographically
    at each stage yields the permutations in lexicographic order.
    """
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be >= 1, got m={m}, k={k}")
    n = m * k
    if n > SHUFFLE_CAP:
        raise SizeCapError(f"m*k = {n} exceeds the cap {SHUFFLE_CAP}")
    done = np.zeros((1, 0), dtype=np.int8)
    rem = np.arange(1, n + 1, dtype=np.int8)[None, :]
    for _ in range(k):
        nr = rem.shape[1]
        chosen = np.array(list(combinations(range(nr), m)), dtype=np.intp)
        others = np.array([[i for i in range(nr) if i not in c] for c in chosen], dtype=np.intp).reshape(len(chosen), nr - m)
        rows = done.shape[0]
        block = rem[:, chosen]  # (rows, C, m)
        done = np.concatenate([np.repeat(done[:, None, :], len(chosen), axis=1), block], axis=2)
        done = done.reshape(rows * len(chosen), -1)
        rem = rem[:, others].reshape(rows * len(chosen), nr - m)
    return ShuffleSet(m, k, done)


def cell_of(x: np.ndarray) -> np.ndarray:
    """Rank of each coordinate in decreasing order (1 = largest), row-wise."""
    order = np.argsort(-x, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, x.shape[1] + 1)[None, :], axis=1)
    return ranks


def membership_counts(x: np.ndarray, shuffles: ShuffleSet, direct_limit: int = 2000) -> np.ndarray:
    """Number of cells ``∇^{mk,σ}``, ``σ`` a shuffle, containing each row of ``x``.

    Small shuffle sets are checked directly against the defining strict
    inequalities. For large sets a point lies in the cell of ``σ`` exactly
    when its decreasing rank vector equals ``σ``, which is counted by lookup.
    """
    P = shuffles.perms.astype(np.intp)
    n = P.shape[1]
    if len(P) <= direct_limit:
        inv = np.argsort(P, axis=1)  # inv[σ, j] = σ^{-1}(j+1) - 1
        counts = np.zeros(x.shape[0], dtype=np.int64)
        for start in range(0, x.shape[0], 512):
            xs = x[start:start + 512]
            y = xs[:, inv]  # (chunk, |P|, n)
            inside = np.all(np.diff(y, axis=2) < 0, axis=2)
            counts[start:start + 512] = inside.sum(axis=1)
        return counts
    base = n + 1
    weights = base ** np.arange(n, dtype=np.int64)
    codes = np.sort(P @ weights)
    q = cell_of(x).astype(np.int64) @ weights
    lo = np.searchsorted(codes, q, side="left")
    hi = np.searchsorted(codes, q, side="right")
    return hi - lo


@dataclass(frozen=True)
class PartitionReport:
    m: int
    k: int
    n_samples: int
    exactly_one: int
    resampled: int

    @property
    def fraction(self) -> float:
        return self.exactly_one / self.n_samples

    def to_dict(self) -> dict:
        return {"m": self.m, "k": self.k, "n_samples": self.n_samples, "exactly_one": self.exactly_one,
                "resampled": self.resampled, "fraction": self.fraction}


def sample_block_simplices(
    gen: np.random.Generator, n: int, m: int, k: int, r: float = 0.0, s: float = 1.0,
    resolution: float | None = None,
) -> tuple[np.ndarray, int]:
    """Points of ``(∇^m_{r,s})^k``: ``k`` blocks, each strictly decreasing.

    Rows with a repeated coordinate (a measure-zero event, made likely on
    purpose by a coarse ``resolution``) are redrawn. Returns the points and
    the number of redrawn rows.
    """
    out = np.empty((n, m * k))
    todo = np.arange(n)
    redrawn = 0
    while todo.size:
        x = r + (s - r) * rng.uniforms(gen, (todo.size, m * k))
        if resolution is not None:
            x = r + resolution * np.ceil((x - r) / resolution)
            x = np.minimum(x, s - resolution / 2)
        xs = np.sort(x, axis=1)
        tie = np.any(np.diff(xs, axis=1) == 0, axis=1)
        ok = ~tie
        blocks = -np.sort(-x[ok].reshape(-1, k, m), axis=2)
        out[todo[ok]] = blocks.reshape(-1, m * k)
        redrawn += int(tie.sum())
        todo = todo[tie]
    return out, redrawn


def partition_check(m: int, k: int, n_samples: int, seed: int = 1, resolution: float | None = None) -> PartitionReport:
    """Count samples of ``(∇^m)^k`` lying in exactly one shuffle cell."""
    shuffles = enumerate_shuffles(m, k)
    x, redrawn = sample_block_simplices(rng.stream(rng.derive_seed(seed, "partition", m, k)), n_samples, m, k,
                                        resolution=resolution)
    counts = membership_counts(x, shuffles)
    return PartitionReport(m, k, n_samples, int(np.sum(counts == 1)), redrawn)


@dataclass(frozen=True)
class BetaChainParams:
    """Exponents and interval of a Beta-chain integral.

    Requires ``a_j + v_j > -1`` and ``v_j > -1`` for every ``j``.
    """

    a: tuple
    v: tuple
    r: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "v", tuple(float(x) for x in self.v))
        if len(self.a) != len(self.v) or not self.a:
            raise PreconditionError("a and v must be non-empty and of equal length")
        if not self.r < self.s:
            raise PreconditionError(f"need r < s, got ({self.r}, {self.s})")
        if any(a + v <= -1 for a, v in zip(self.a, self.v)):
            raise PreconditionError("need a_j + v_j > -1 for every j")

    @property
    def m(self) -> int:
        return len(self.a)


def _chain_exponents(p: BetaChainParams) -> list[float]:
    # E[k] is the exponent of (s_k - r) after integrating out s_m, ..., s_{k+1}.
    m, a, v = p.m, p.a, p.v
    E = [0.0] * m
    E[m - 1] = a[m - 1] + v[m - 1]
    for k in range(m - 1, 0, -1):
        E[k - 1] = a[k - 1] + E[k] + v[k - 1] + 1.0
    return E


def beta_chain_integral(p: BetaChainParams) -> float:
    r"""Closed form of the Beta-chain integral.

    With :math:`A_k = \sum_{l \ge k} a_l` and :math:`V_k = \sum_{l \ge k} v_l`,

    .. math:: \prod_{k=2}^m \frac{\Gamma(1 + v_{k-1})\,\Gamma(A_k + V_k + m - k + 1)}
              {\Gamma(A_k + V_{k-1} + m - k + 2)}\cdot
              \frac{\Gamma(A_1 + V_1 + m)}{\Gamma(A_1 + V_1 + m + 1)}\,(s - r)^{A_1 + V_1 + m}.

    Raises
    ------
    PreconditionError
        If any Gamma argument is not positive.
    """
    m, a, v = p.m, np.array(p.a), np.array(p.v)
    A = np.cumsum(a[::-1])[::-1]
    V = np.cumsum(v[::-1])[::-1]
    args_num, args_den = [], []
    for k in range(2, m + 1):
        args_num += [1 + v[k - 2], A[k - 1] + V[k - 1] + m - k + 1]
        args_den += [A[k - 1] + V[k - 2] + m - k + 2]
    top = A[0] + V[0] + m
    args_num.append(top)
    args_den.append(top + 1)
    if min(args_num + args_den) <= 0:
        raise PreconditionError("a Gamma argument is not positive")
    log_val = float(np.sum(gammaln(args_num)) - np.sum(gammaln(args_den)))
    return math.exp(log_val) * (p.s - p.r) ** top


def beta_chain_recursive(p: BetaChainParams) -> float:
    """The same integral by integrating out ``s_m, ..., s_1`` one Beta integral at a time."""
    m, v = p.m, p.v
    E = _chain_exponents(p)
    val = 1.0
    for k in range(m, 1, -1):
        if E[k - 1] + 1 <= 0 or v[k - 2] + 1 <= 0:
            raise PreconditionError("a Beta argument is not positive")
        val *= beta_fn(E[k - 1] + 1, v[k - 2] + 1)
    return val * (p.s - p.r) ** (E[0] + 1) / (E[0] + 1)


def mc_simplex_integral(p: BetaChainParams, n_mc: int = 1_000_000, seed: int = 1, block: int = 100_000) -> tuple[float, float]:
    """Importance-sampling estimate and standard error of the Beta-chain integral.

    With ``y_j = s_j - r`` the gaps ``g_j = y_j - y_{j+1}`` (``y_{m+1} = 0``) and
    ``g_0 = (s - r) - y_1`` are drawn from ``(s - r) Dirichlet(c_1 + 1, ...,
    c_m + 1, 1)`` with ``c_j = v_j + min(a_j, 0)`` for ``j < m`` and
    ``c_m = a_m + v_m``. The power-law factors of the proposal absorb every
    singular factor of the integrand, so the weights are bounded.
    """
    m = p.m
    a, v = np.array(p.a), np.array(p.v)
    L = p.s - p.r
    c = v + np.minimum(a, 0.0)
    c[-1] = a[-1] + v[-1]
    alpha = np.append(c + 1.0, 1.0)
    if np.any(alpha <= 0):
        raise PreconditionError("need v_j + min(a_j, 0) > -1 for the proposal")
    log_norm = gammaln(alpha.sum()) - np.sum(gammaln(alpha))
    seeds = rng.replication_seeds(seed, "simplex", -(-n_mc // block))
    sums = []
    for i, sd in enumerate(seeds):
        n = min(block, n_mc - i * block)
        gen = rng.stream(sd)
        G = gen.dirichlet(alpha, size=n)
        g = G[:, :m] * L
        y = np.cumsum(g[:, ::-1], axis=1)[:, ::-1]  # y_j = Σ_{l >= j} g_l
        log_f = np.sum(a * np.log(y) + v * np.log(g), axis=1)
        log_q = log_norm + np.sum((alpha[:m] - 1) * np.log(G[:, :m]), axis=1) - m * math.log(L)
        sums.append(np.exp(log_f - log_q))
    w = np.concatenate(sums)
    return rng.mean_and_se(w)
