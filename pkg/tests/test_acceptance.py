"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from fbsheet import Grid2D, HurstPair, SampledFn2D, drift, rng
from fbsheet.cli import EXPERIMENTS, default_config, run_experiment
from fbsheet.frac_calc import FracOrder2D, frac_derivative_2d, frac_integral_2d
from fbsheet.gaussian import (
    abs_moment_vs_permanent, det_lower_bound_check, gaussian_bump_test, gaussian_identity_check, ibp_check,
    permanent, slnd_search,
)
from fbsheet.girsanov import node_functional, theta_field, weighted_expectations
from fbsheet.kernel import constant_theta, cov_matrix, covariance, kernel_1d, kernel_2d
from fbsheet.plane_sde import (
    convergence_study, euler_solve, kernel_seed, malliavin_derivative, malliavin_fd_check, malliavin_series,
    malliavin_values, mesh_ladder, picard_solve,
)
from fbsheet.sim import (
    empirical_cov_matrix, fbs_cholesky_batch, fbs_kernel_batch, sample_fbs_cholesky, sample_fbs_kernel,
)
from fbsheet.simplex import (
    BetaChainParams, beta_chain_integral, enumerate_shuffles, mc_simplex_integral, partition_check,
)

from oracles import permanent_bruteforce

RESULTS: list[str] = []
WORKERS = 4


def record(k: int, title: str, ok: bool, detail: str, t0: float) -> None:
    line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({time.perf_counter() - t0:.1f}s)"
    RESULTS.append(line)
    print(line, flush=True)


def test_c01_fractional_inversion():
    t0 = time.perf_counter()
    gen = rng.stream(rng.derive_seed(1, "acceptance", 1))
    g = Grid2D.square(1.0, 64)
    worst = 0.0
    for _ in range(20):
        c = rng.uniforms(gen, 6) * 2 - 1
        fn = lambda s, t: 2 + c[0] * s + c[1] * t + c[2] * np.sin(3 * s + c[3]) * np.cos(2 * t) + c[4] * np.exp(c[5] * s * t)
        a, b = 0.1 + 0.35 * rng.uniforms(gen, 2)
        f = SampledFn2D.from_callable(g, fn)
        back = frac_derivative_2d(frac_integral_2d(f, FracOrder2D(a, b)), FracOrder2D(a, b)).values
        err = np.max(np.abs(back[1:, 1:] - f.values[1:, 1:])) / np.max(np.abs(f.values[1:, 1:]))
        worst = max(worst, err)
    ok = worst < 1e-2 and time.perf_counter() - t0 < 60
    record(1, "D∘I inversion, 20 functions, 64x64", ok, f"max rel err {worst:.2e} < 1e-2", t0)
    assert ok


def _kernel_cov_quad(p1, p2, h):
    out = 1.0
    for ax, hh in enumerate(h):
        a, b = p1[ax], p2[ax]
        val, _ = integrate.quad(lambda r: kernel_1d(r, a, hh) * kernel_1d(r, b, hh), 0.0, min(a, b),
                                limit=400, epsabs=1e-12, epsrel=1e-9)
        out *= val
    return out


def test_c02_kernel_covariance_representation():
    t0 = time.perf_counter()
    h = HurstPair(0.3, 0.3)
    gen = rng.stream(rng.derive_seed(1, "acceptance", 2))
    worst = 0.0
    for _ in range(10):
        p1, p2 = tuple(0.05 + 0.95 * rng.uniforms(gen, 2)), tuple(0.05 + 0.95 * rng.uniforms(gen, 2))
        # the product structure K_H = K_h1 K_h2 turns the double integral into two 1D quadratures
        assert kernel_2d(0.5 * p1[0], 0.5 * p1[1], *p1, h) == kernel_1d(0.5 * p1[0], p1[0], 0.3) * kernel_1d(
            0.5 * p1[1], p1[1], 0.3)
        worst = max(worst, abs(_kernel_cov_quad(p1, p2, h) / covariance(p1, p2, h) - 1))
    ok = worst < 2e-2 and time.perf_counter() - t0 < 120
    record(2, "∫∫K_H K_H vs R_H, 10 pairs, h=(0.3,0.3)", ok, f"max rel err {worst:.2e} < 2e-2", t0)
    assert ok


def test_c03_simulation_route_agreement():
    t0 = time.perf_counter()
    h = HurstPair(0.3, 0.3)
    g = Grid2D.square(1.0, 6)
    n = 20_000
    kern = empirical_cov_matrix(fbs_kernel_batch(g, h, rng.replication_seeds(1, "acceptance-kernel", n),
                                                 workers=WORKERS))
    chol = empirical_cov_matrix(fbs_cholesky_batch(g, h, rng.replication_seeds(1, "acceptance-cholesky", n),
                                                   workers=WORKERS))
    exact = cov_matrix(g.interior_points(), h).entries
    big = exact > 0.05
    worst = float(np.max(np.abs(kern[big] / chol[big] - 1)))
    vs_exact = [float(np.max(np.abs(c[big] / exact[big] - 1))) for c in (kern, chol)]
    ok = worst < 0.10 and time.perf_counter() - t0 < 300
    record(3, "kernel vs Cholesky empirical covariance, 6x6, N=2e4", ok,
           f"max rel diff {worst:.3f} < 0.10 on {int(big.sum())} entries "
           f"(vs exact: kernel {vs_exact[0]:.3f}, Cholesky {vs_exact[1]:.3f})", t0)
    assert ok


def test_c04_girsanov():
    t0 = time.perf_counter()
    h = HurstPair(0.1, 0.1)
    g = Grid2D.square(1.0, 32)
    fs = [
        node_functional(1.0, 1.0, g, 2.0),
        node_functional(0.5, 0.5, g, 2.0),
        lambda w: float(np.tanh(w[0].mean())),
        lambda w: float(np.cos(w[0, -1, -1])),
        lambda w: float(w[0, 16:, 16:].max() > 0.5),
    ]
    drifts = [drift.constant(0.5), drift.gaussian_bump(1.0, 1.0), drift.tanh_drift(1.0)]
    ez_worst, z_worst, ok = 0.0, 0.0, True
    for b in drifts:
        ests, (zm, zse) = weighted_expectations(fs, b, h, 10_000, g, 0.0, 1, WORKERS)
        ez_worst = max(ez_worst, abs(zm - 1))
        z_worst = max(z_worst, max(e.z_score for e in ests))
        ok &= abs(zm - 1) <= 0.05 and all(e.z_score <= 3 for e in ests)
    ok &= time.perf_counter() - t0 < 300
    record(4, "Girsanov, 3 drifts x 5 functionals, N=1e4", ok,
           f"max |E[Z]-1| {ez_worst:.3f} <= 0.05, max z {z_worst:.2f} <= 3", t0)
    assert ok


def test_c05_theta_closed_form():
    t0 = time.perf_counter()
    g = Grid2D.square(1.0, 64)
    worst = 0.0
    for hh in [(0.25, 0.25), (0.1, 0.1), (0.15, 0.4)]:
        h = HurstPair(*hh)
        th = theta_field(drift.constant(0.8), sample_fbs_kernel(g, h, 1, 1), h)
        worst = max(worst, abs(th.values[0, -1, -1] / constant_theta(0.8, 1, 1, h) - 1))
    quarter = constant_theta(1.0, 1, 1, HurstPair(0.25, 0.25))
    ok = worst < 1e-2 and abs(quarter - 1.04605) < 1e-5
    record(5, "constant-drift θ at (1,1), 3 Hurst pairs", ok,
           f"max rel err {worst:.2e} < 1e-2; closed form {quarter:.5f}·c at h=(0.25,0.25)", t0)
    assert ok


def test_c06_solver_suite():
    t0 = time.perf_counter()
    h = HurstPair(0.1, 0.1)
    g = Grid2D.square(1.0, 32)
    noise = sample_fbs_cholesky(g, h, 1, 3)
    S, T = g.mesh()
    zero_ok = np.array_equal(euler_solve(drift.zero(), 0.2, noise).values, 0.2 + noise.values)
    const_err = np.max(np.abs(euler_solve(drift.constant(0.7), 0.2, noise).values[0] - (0.2 + 0.7 * S * T + noise.values[0])))
    pe = np.max(np.abs(euler_solve(drift.linear(-1.0), 0.5, noise).values - picard_solve(drift.linear(-1.0), 0.5, noise).values))
    mesh = mesh_ladder(drift.tanh_drift(-2.0), 0.3, h, [8, 16, 32, 64], 200, seed_base=1, workers=WORKERS)
    conv = convergence_study(drift.indicator(2.0, -0.5, 0.5), 0.0, h, [1, 2, 4, 8, 16], 400, g, 1, WORKERS)
    ok = zero_ok and const_err < 1e-12 and pe < 1e-6 and mesh.is_decreasing() and conv.is_decreasing()
    ladder = ", ".join(f"{r[2]:.1e}" for r in conv.rows)
    record(6, "solver suite", ok,
           f"b=0 exact {zero_ok}, b=c err {const_err:.1e}, Picard/Euler {pe:.1e}, mesh ladder decreasing "
           f"{mesh.is_decreasing()}, mollified indicator ladder [{ladder}] decreasing {conv.is_decreasing()}", t0)
    assert ok


def test_c07_malliavin():
    t0 = time.perf_counter()
    h = HurstPair(0.1, 0.1)
    g = Grid2D.square(1.0, 32)
    noise = sample_fbs_kernel(g, h, 1, 4)
    sol0 = euler_solve(drift.zero(), 0.0, noise)
    D0 = malliavin_values(drift.zero(), sol0, 0.25, 0.25, h)[..., 0, 0]
    zero_ok = np.array_equal(D0, kernel_seed(g, 0.25, 0.25, h))
    zero_ok &= malliavin_derivative(drift.zero(), sol0, (1.0, 1.0), (0.25, 0.25), h).matrix[0, 0] == kernel_2d(
        0.25, 0.25, 1.0, 1.0, h)
    lam = 0.8
    sol = euler_solve(drift.linear(lam), 0.1, noise)
    D = malliavin_values(drift.linear(lam), sol, 0.25, 0.25, h)[..., 0, 0]
    ser = malliavin_series(lam, g, 0.25, 0.25, h, terms=6)
    series_err = float(np.max(np.abs(D - ser)) / np.max(np.abs(ser)))
    fd_worst = 0.0
    for b in (drift.tanh_drift(1.0), drift.gaussian_bump(2.0, 0.5), drift.wave_drift(1.0)):
        fd, pred = malliavin_fd_check(b, 0.3, h, (0.25, 0.25, 0.5, 0.5), 1e-3, 1, g)
        fd_worst = max(fd_worst, abs(fd - pred) / abs(pred))
    ok = bool(zero_ok) and series_err < 1e-4 and fd_worst < 0.05
    record(7, "Malliavin derivative", ok,
           f"b=0 gives K_H {bool(zero_ok)}, 6-term series rel err {series_err:.1e} < 1e-4, "
           f"finite-difference mismatch {fd_worst:.1e} < 0.05", t0)
    assert ok


def test_c08_slnd():
    t0 = time.perf_counter()
    ok, parts = True, []
    for hh in [(0.25, 0.25), (0.1, 0.3)]:
        h = HurstPair(*hh)
        reps = [slnd_search(h, 1000, 6, 0.2, 1.0, base) for base in (1, 2, 3)]
        infs = [r.infimum for r in reps]
        spread = max(infs) / min(infs) - 1
        ok &= all(r.all_positive for r in reps) and spread <= 0.2
        parts.append(f"h={hh}: inf {', '.join(f'{v:.4f}' for v in infs)} (spread {spread:.1%})")
    record(8, "SLND ratio > 0 on 1e3 configurations, stable infimum", ok, "; ".join(parts), t0)
    assert ok


def test_c09_gaussian_lemmas():
    t0 = time.perf_counter()
    gen = rng.stream(rng.derive_seed(1, "acceptance", 9))
    perm_ok = True
    for n in range(1, 6):
        A = rng.normals(gen, (n, n))
        perm_ok &= math.isclose(permanent(A), permanent_bruteforce(A), rel_tol=1e-9, abs_tol=1e-12)
    moment_ok = True
    for k in range(10):
        n = 2 + k % 3
        B = rng.normals(gen, (n, n))
        moment_ok &= abs_moment_vs_permanent(B @ B.T + 0.05 * np.eye(n), 100_000, seed=k).holds
    h = HurstPair(0.3, 0.2)
    b2_err = 0.0
    for n in (1, 2, 3):
        C = cov_matrix(0.2 + 0.8 * rng.uniforms(gen, (n, 2)), h)
        lhs, rhs = gaussian_identity_check(C, lambda v: 1 + v**2, quad_n=30)
        b2_err = max(b2_err, abs(lhs - rhs) / abs(rhs))
    b3_ok = True
    for k in range(20):
        pts = 0.05 + 0.95 * rng.uniforms(gen, (2 + k % 6, 2))
        first, second = det_lower_bound_check(pts, h)
        b3_ok &= first >= second
    ok = perm_ok and moment_ok and b2_err < 1e-3 and b3_ok
    record(9, "Gaussian lemmas", ok,
           f"permanent exact {perm_ok}, abs-moment bound {moment_ok}, identity rel err {b2_err:.1e}, "
           f"determinant bound {b3_ok}", t0)
    assert ok


def test_c10_simplex():
    t0 = time.perf_counter()
    counts_ok = all(len(enumerate_shuffles(m, k)) == math.factorial(m * k) // math.factorial(m) ** k
                    for m in range(1, 11) for k in range(1, 11) if m * k <= 10)
    rep = partition_check(2, 2, 10_000, seed=1)
    gen = rng.stream(rng.derive_seed(1, "acceptance", 10))
    worst_z = 0.0
    for i in range(10):
        m = 1 + i % 3
        a = tuple(-0.45 + 1.0 * rng.uniforms(gen, m))
        v = tuple(-0.45 + 1.0 * rng.uniforms(gen, m))
        p = BetaChainParams(a, v)
        est, se = mc_simplex_integral(p, 200_000, seed=i)
        exact = beta_chain_integral(p)
        # for m = 1 the importance weight is constant and se is pure roundoff
        worst_z = max(worst_z, abs(est - exact) / max(se, 1e-12 * abs(exact)))
    ok = counts_ok and rep.exactly_one == rep.n_samples and worst_z <= 3
    record(10, "shuffles and Beta chains", ok,
           f"counts {counts_ok}, partition {rep.exactly_one}/{rep.n_samples} exactly-one, "
           f"Beta-chain max z {worst_z:.2f} <= 3", t0)
    assert ok


def test_c11_integration_by_parts():
    t0 = time.perf_counter()
    h = HurstPair(0.1, 0.1)
    f = gaussian_bump_test(1.0, 0.0, 0.5)
    worst = {0: 0.0, 1: 0.0}
    for k in range(10):
        seed = rng.derive_seed(1, "ibp", k)
        for alpha in (0, 1):
            lhs, rhs = ibp_check(f, (0.2, 0.2, 0.9, 0.9), h, seed, alpha)
            worst[alpha] = max(worst[alpha], abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    ok = worst[1] < 1e-2 and worst[0] < 1e-3
    record(11, "integration by parts, 10 seeds", ok,
           f"alpha=1 mismatch {worst[1]:.1e} < 1e-2, alpha=0 mismatch {worst[0]:.1e} < 1e-3", t0)
    assert ok


def test_c12_determinism(tmp_path):
    t0 = time.perf_counter()
    bad = []
    for name in EXPERIMENTS:
        cfg = default_config(name)
        cfg["override_hurst_gate"] = False
        dirs = []
        for tag, workers in (("a", 1), ("b", WORKERS), ("c", 1)):
            out = tmp_path / f"{name}-{tag}"
            run_experiment(name, cfg, out, workers)
            dirs.append(out)
        man = json.loads((dirs[0] / "manifest.json").read_text())
        for art in man["artifacts"]:
            data = [(d / art).read_bytes() for d in dirs]
            if not (data[0] == data[1] == data[2]):
                bad.append(f"{name}/{art}")
        mans = [json.loads((d / "manifest.json").read_text()) for d in dirs]
        for m in mans:
            m.pop("timestamp")
        if not (mans[0] == mans[1] == mans[2]):
            bad.append(f"{name}/manifest")
    ok = not bad
    record(12, "byte-identical artifacts across reruns and worker counts", ok,
           f"{len(EXPERIMENTS)} experiments, mismatches: {bad or 'none'}", t0)
    assert ok


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
