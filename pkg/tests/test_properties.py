"""Property-based checks of the structural invariants."""

import math

import numpy as np
from hypothesis import assume, given, settings, strategies as st

from fbsheet import Grid2D, HurstPair, SampledFn2D, drift
from fbsheet.frac_calc import FracOrder2D, frac_derivative_2d, frac_integral_2d
from fbsheet.gaussian import conditional_variance, det_lower_bound_check, permanent, slnd_ratio
from fbsheet.kernel import cov_matrix, covariance, kernel_1d, kernel_2d
from fbsheet.plane_sde import euler_solve
from fbsheet.sim import sample_fbs_kernel
from fbsheet.simplex import BetaChainParams, beta_chain_integral, beta_chain_recursive, enumerate_shuffles

from oracles import permanent_bruteforce

hurst = st.floats(0.02, 0.48)
hpairs = st.builds(HurstPair, hurst, hurst)
unit = st.floats(0.05, 1.0)
points = st.tuples(unit, unit)
orders = st.floats(0.1, 0.9)
coef = st.floats(-2, 2)
G32 = Grid2D.square(1.0, 32)

prop = settings(max_examples=25, deadline=None)


def poly(c):
    return lambda s, t: c[0] + c[1] * s + c[2] * t + c[3] * s * t**2 + c[4] * s**2


@prop
@given(st.lists(coef, min_size=5, max_size=5), orders, orders, orders, orders)
def test_integral_semigroup(c, a1, b1, a2, b2):
    # the inner result behaves like s^a1 t^b1 at the axes, which the outer
    # quadrature resolves only a few cells away from them
    g = Grid2D.square(1.0, 128)
    f = SampledFn2D.from_callable(g, poly(c))
    twice = frac_integral_2d(frac_integral_2d(f, FracOrder2D(a1, b1)), FracOrder2D(a2, b2)).values
    once = frac_integral_2d(f, FracOrder2D(a1 + a2, b1 + b2)).values
    scale = max(np.max(np.abs(once)), 1e-12)
    assert np.max(np.abs(twice - once)[32:, 32:]) <= 1e-2 * scale


@prop
@given(st.lists(st.floats(0, 2), min_size=5, max_size=5), orders, orders)
def test_integral_positivity(c, a, b):
    f = SampledFn2D.from_callable(G32, lambda s, t: c[0] + c[1] * s + c[2] * t + c[3] * s * t + c[4] * s**2)
    assert np.all(frac_integral_2d(f, FracOrder2D(a, b)).values >= 0)


@prop
@given(st.lists(coef, min_size=5, max_size=5), st.lists(coef, min_size=5, max_size=5), coef, orders, orders)
def test_integral_and_derivative_linear(c1, c2, lam, a, b):
    f = SampledFn2D.from_callable(G32, poly(c1))
    g = SampledFn2D.from_callable(G32, poly(c2))
    for op, o in ((frac_integral_2d, FracOrder2D(a, b)), (frac_derivative_2d, FracOrder2D(a * 0.9, b * 0.9))):
        lhs = op(f + lam * g, o).values
        rhs = op(f, o).values + lam * op(g, o).values
        assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


@prop
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.floats(0.15, 0.45), st.floats(0.15, 0.45))
def test_derivative_inverts_integral(c, a, b):
    g = Grid2D.square(1.0, 64)
    fn = lambda s, t: 2 + c[0] * s + c[1] * t + c[2] * np.sin(2 * s) * t + c[3] * s * t
    f = SampledFn2D.from_callable(g, fn)
    back = frac_derivative_2d(frac_integral_2d(f, FracOrder2D(a, b)), FracOrder2D(a, b)).values
    assert np.max(np.abs(back[1:, 1:] - f.values[1:, 1:])) <= 1e-2 * np.max(np.abs(f.values))


@prop
@given(unit, unit, unit, unit, hpairs)
def test_kernel_factorizes(r, u, s, t, h):
    assume(r < s and u < t)
    assert kernel_2d(r, u, s, t, h) == kernel_1d(r, s, h.h1) * kernel_1d(u, t, h.h2)


@prop
@given(st.floats(0.01, 0.99), hurst)
def test_kernel_positive(frac, h):
    assert kernel_1d(frac, 1.0, h) > 0


@prop
@given(points, points, hpairs)
def test_covariance_symmetric_and_cauchy_schwarz(p, q, h):
    c = covariance(p, q, h)
    assert c == covariance(q, p, h)
    assert c * c <= covariance(p, p, h) * covariance(q, q, h) * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(points, min_size=1, max_size=60), hpairs)
def test_cov_matrix_psd(pts, h):
    C = cov_matrix(pts, h)
    assert np.array_equal(C.entries, C.entries.T)
    L = C.cholesky()
    assert np.all(np.isfinite(L))
    assert np.min(np.linalg.eigvalsh(C.entries)) > -1e-10


@prop
@given(st.integers(1, 5), st.integers(1, 5))
def test_shuffle_count(m, k):
    assume(m * k <= 8)
    S = enumerate_shuffles(m, k)
    assert len(S) == math.factorial(m * k) // math.factorial(m) ** k
    assert len({tuple(p) for p in S.perms}) == len(S)
    blocks = S.perms.reshape(len(S), k, m)
    assert np.all(np.diff(blocks, axis=2) > 0)
    assert np.all(np.sort(S.perms, axis=1) == np.arange(1, m * k + 1))


@prop
@given(st.lists(st.tuples(st.floats(-0.45, 0.8), st.floats(-0.45, 0.8)), min_size=1, max_size=4),
       st.floats(0, 0.5), st.floats(0.6, 2.0))
def test_beta_recursion_equals_closed_form(av, r, s):
    a = [x for x, _ in av]
    v = [y for _, y in av]
    p = BetaChainParams(a, v, r, s)
    closed = beta_chain_integral(p)
    assert math.isclose(beta_chain_recursive(p), closed, rel_tol=1e-12)
    assert closed > 0


@prop
@given(points, st.lists(points, min_size=0, max_size=6), hpairs)
def test_conditional_variance_bounds(target, cond, h):
    assume(all(abs(target[0] - c[0]) + abs(target[1] - c[1]) > 1e-3 for c in cond))
    assume(len({tuple(c) for c in cond}) == len(cond))
    v = conditional_variance(target, cond, h)
    assert -1e-10 <= v <= covariance(target, target, h) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0.2, 1), st.floats(0.2, 1)), min_size=1, max_size=6),
       st.tuples(st.floats(0.2, 1), st.floats(0.2, 1)), hpairs)
def test_slnd_ratio_positive(cond, target, h):
    assume(all(min(abs(target[0] - c[0]), abs(target[1] - c[1])) > 1e-2 for c in cond))
    assert slnd_ratio(target, cond, h) > 0


@prop
@given(st.lists(points, min_size=2, max_size=8, unique=True), hpairs)
def test_det_lower_bound_holds(pts, h):
    first, second = det_lower_bound_check(pts, h)
    assert first >= second - 1e-14 * max(1.0, abs(second))


@prop
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_permanent_matches_bruteforce(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    assert math.isclose(permanent(A), permanent_bruteforce(A), rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(-1, 1), st.integers(0, 10**6))
def test_solution_boundary_condition(x0, amp, seed):
    noise = sample_fbs_kernel(Grid2D.square(1.0, 8), HurstPair(0.1, 0.1), 1, seed)
    sol = euler_solve(drift.tanh_drift(amp), x0, noise)
    assert np.all(sol.values[:, 0, :] == x0) and np.all(sol.values[:, :, 0] == x0)
