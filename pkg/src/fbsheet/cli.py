"""Command-line experiment driver.

Each subcommand reads an optional JSON config, fills in the defaults listed
by ``--help``, enforces ``h1 + h2 < 1/(2(d+1))`` unless
``--override-hurst-gate`` is given, runs the experiment and writes its
artifacts plus ``manifest.json`` into ``--out``.

Exit status: 0 when every in-experiment check passes, 1 when a check fails,
2 for usage errors (bad flags, unreadable or invalid config).
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, drift as drifts, rng
from .errors import FbsheetError
from .girsanov import node_functional, weighted_expectations
from .gaussian import (
    abs_moment_vs_permanent, det_lower_bound_check, gaussian_bump_test, gaussian_identity_check, ibp_check,
    slnd_search,
)
from .grid import Grid2D
from .kernel import HurstPair, cov_matrix
from .plane_sde import convergence_study, euler_solve, hurst_gate, malliavin_fd_check, mollify_drift
from .reports import write_json, write_manifest
from .sim import (
    SheetSample, empirical_cov_matrix, fbs_cholesky_batch, fbs_kernel_batch, route_covariance,
    sample_brownian_sheet, sample_fbs_cholesky, sample_fbs_kernel,
)
from .simplex import BetaChainParams, beta_chain_integral, beta_chain_recursive, enumerate_shuffles, \
    mc_simplex_integral, partition_check

COMMON = {"t_max": 1.0, "n": 32, "h": [0.1, 0.1], "d": 1, "seed_base": 1, "x0": 0.0}

EXPERIMENTS = {
    "simulate": {"route": "kernel", "n": 16},
    "covcheck": {"n": 6, "n_mc": 4000, "z_tol": 5.0},
    "slnd": {"trials": 1000, "max_points": 6, "epsilon": 0.2},
    "girsanov": {"drift": {"type": "bump", "amp": 1.0, "width": 1.0}, "n_mc": 2000, "clip": 2.0,
                 "z_tol": 3.0, "ez_tol": 0.05},
    "solve": {"drift": {"type": "tanh", "amp": -1.0}, "route": "kernel", "x0": 0.5},
    "converge": {"drift": {"type": "indicator", "amp": 2.0, "lo": -0.5, "hi": 0.5},
                 "levels": [1, 2, 4, 8, 16], "n_mc": 200},
    "malliavin": {"drift": {"type": "tanh", "amp": 1.0}, "rect": [0.25, 0.25, 0.5, 0.5], "eps": 1e-3,
                  "x0": 0.3, "rel_tol": 0.05},
    "ibp": {"rect": [0.2, 0.2, 0.9, 0.9], "n_seeds": 10, "amp": 1.0, "center": 0.0, "width": 0.5,
            "tol_alpha0": 1e-3, "tol_alpha1": 1e-2},
    "betachain": {"configs": [{"a": [-0.2, 0.0], "v": [0.0, -0.3]}, {"a": [0.3, -0.5, -0.2], "v": [-0.4, 0.2, -0.6]},
                              {"a": [0.0], "v": [0.0]}], "n_mc": 200000},
    "shuffles": {"pairs": [[2, 1], [1, 3], [2, 2], [2, 3], [3, 2], [2, 5]], "partition": [2, 2],
                 "n_samples": 10000},
}

DRIFT_TYPES = {
    "zero": lambda p, d: drifts.zero(d),
    "constant": lambda p, d: drifts.constant(p.get("c", 0.5), d),
    "linear": lambda p, d: drifts.linear(p.get("lam", -1.0), d),
    "bump": lambda p, d: drifts.gaussian_bump(p.get("amp", 1.0), p.get("width", 1.0), p.get("center", 0.0), d),
    "tanh": lambda p, d: drifts.tanh_drift(p.get("amp", 1.0), d),
    "wave": lambda p, d: drifts.wave_drift(p.get("amp", 1.0), d),
    "indicator": lambda p, d: drifts.indicator(p.get("amp", 1.0), p.get("lo", -0.5), p.get("hi", 0.5), d),
}


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


def default_config(experiment: str) -> dict:
    cfg = copy.deepcopy(COMMON)
    cfg.update(copy.deepcopy(EXPERIMENTS[experiment]))
    return cfg


def load_config(experiment: str, path: str | None, seed: int | None, override: bool) -> dict:
    """Merge a JSON file into the defaults and validate the result."""
    cfg = default_config(experiment)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(user) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for {experiment}: {unknown}")
        cfg.update(user)
    if seed is not None:
        cfg["seed_base"] = seed
    validate(cfg, override)
    cfg["override_hurst_gate"] = bool(override)
    return cfg


def validate(cfg: dict, override: bool) -> None:
    try:
        h1, h2 = (float(x) for x in cfg["h"])
        t_max, n, d = float(cfg["t_max"]), int(cfg["n"]), int(cfg["d"])
        int(cfg["seed_base"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed numeric field: {exc}") from exc
    if not (0 < h1 < 0.5 and 0 < h2 < 0.5):
        raise ConfigError(f"h must lie in (0, 1/2)^2, got {cfg['h']}")
    if not t_max > 0 or n < 1 or d < 1 or d > 3:
        raise ConfigError("need t_max > 0, n >= 1 and 1 <= d <= 3")
    if "n_mc" in cfg and int(cfg["n_mc"]) < 2:
        raise ConfigError("n_mc must be at least 2")
    if "drift" in cfg and cfg["drift"].get("type") not in DRIFT_TYPES:
        raise ConfigError(f"unknown drift type {cfg['drift'].get('type')!r}; choose from {sorted(DRIFT_TYPES)}")
    if not override and not hurst_gate(HurstPair(h1, h2), d):
        raise ConfigError(
            f"h1 + h2 = {h1 + h2:g} is not below 1/(2(d+1)) = {1 / (2 * (d + 1)):g}; "
            "pass --override-hurst-gate for exploratory runs"
        )


def _setup(cfg):
    return Grid2D.square(cfg["t_max"], int(cfg["n"])), HurstPair(*map(float, cfg["h"]))


def _drift(cfg):
    spec = dict(cfg["drift"])
    return DRIFT_TYPES[spec.pop("type")](spec, int(cfg["d"]))


def run_simulate(cfg, out, workers):
    grid, h = _setup(cfg)
    d, seed = int(cfg["d"]), int(cfg["seed_base"])
    route = cfg["route"]
    if route == "brownian":
        smp = sample_brownian_sheet(grid, d, seed)
    elif route == "cholesky":
        smp = sample_fbs_cholesky(grid, h, d, seed)
    elif route == "kernel":
        smp = sample_fbs_kernel(grid, h, d, seed)
    else:
        raise ConfigError(f"unknown route {route!r}")
    smp.to_csv(out / "sample.csv")
    axes_zero = bool(np.all(smp.values[:, 0, :] == 0) and np.all(smp.values[:, :, 0] == 0))
    write_json(out / "simulate.json", {"route": route, "axes_zero": axes_zero, "finite": bool(np.all(np.isfinite(smp.values)))})
    return axes_zero, ["sample.csv", "simulate.json"]


def _cov_z(emp, exact, n):
    var = np.diag(exact)
    se = np.sqrt((np.outer(var, var) + exact**2) / n)
    return float(np.max(np.abs(emp - exact) / se))


def run_covcheck(cfg, out, workers):
    grid, h = _setup(cfg)
    n_mc = int(cfg["n_mc"])
    exact = cov_matrix(grid.interior_points(), h)
    exact.to_csv(out / "cov_matrix.csv")
    E = exact.entries
    routed = route_covariance(grid, h)
    emp_c = empirical_cov_matrix(fbs_cholesky_batch(grid, h, rng.replication_seeds(cfg["seed_base"], "covcheck-chol", n_mc), workers=workers))
    emp_k = empirical_cov_matrix(fbs_kernel_batch(grid, h, rng.replication_seeds(cfg["seed_base"], "covcheck-kernel", n_mc), workers=workers))
    big = E > 0.05
    report = {
        "n_mc": n_mc,
        "cholesky_max_z": _cov_z(emp_c, E, n_mc),
        "kernel_max_z_vs_route": _cov_z(emp_k, routed, n_mc),
        "kernel_route_bias_max_rel": float(np.max(np.abs(routed / E - 1)[big])) if big.any() else 0.0,
        "kernel_empirical_max_rel": float(np.max(np.abs(emp_k / E - 1)[big])) if big.any() else 0.0,
        "cholesky_empirical_max_rel": float(np.max(np.abs(emp_c / E - 1)[big])) if big.any() else 0.0,
        "jitter": exact.jitter,
    }
    ok = report["cholesky_max_z"] <= cfg["z_tol"] and report["kernel_max_z_vs_route"] <= cfg["z_tol"]
    report["passed"] = ok
    write_json(out / "covcheck.json", report)
    return ok, ["cov_matrix.csv", "covcheck.json"]


def run_slnd(cfg, out, workers):
    _, h = _setup(cfg)
    rep = slnd_search(h, int(cfg["trials"]), int(cfg["max_points"]), float(cfg["epsilon"]), float(cfg["t_max"]),
                      int(cfg["seed_base"]))
    record = {"lemma": "sectorial local nondeterminism", "trials": rep.trials, "worst_margin": rep.infimum,
              "config": cfg, "details": rep.to_dict()}
    write_json(out / "slnd.json", record)
    return rep.all_positive, ["slnd.json"]


def _girsanov_functionals(grid, clip):
    n = grid.n_s
    half = (n // 2) * grid.ds
    return [
        ("clip_TT", node_functional(grid.t_max, grid.t_max, grid, clip)),
        ("clip_mid", node_functional(half, half, grid, clip)),
        ("tanh_mean", lambda w: float(np.tanh(w[0].mean()))),
        ("cos_TT", lambda w: float(np.cos(w[0, -1, -1]))),
        ("exceed_half", lambda w: float(w[0, n // 2:, n // 2:].max() > 0.5)),
    ]


def run_girsanov(cfg, out, workers):
    grid, h = _setup(cfg)
    b = _drift(cfg)
    named = _girsanov_functionals(grid, float(cfg["clip"]))
    ests, (zm, zse) = weighted_expectations([f for _, f in named], b, h, int(cfg["n_mc"]), grid, cfg["x0"],
                                            int(cfg["seed_base"]), workers)
    records = []
    ok = abs(zm - 1) <= max(cfg["ez_tol"], 3 * zse)
    for (name, _), e in zip(named, ests):
        records.append({"functional": name, "estimate": e.weighted, "std_error": e.weighted_se,
                        "plain_estimate": e.plain, "plain_std_error": e.plain_se, "z_score": e.z_score,
                        "n": e.n, "seed_base": e.seed_base})
        ok &= e.z_score <= cfg["z_tol"]
    write_json(out / "girsanov.json", {"functionals": records, "doleans": {"estimate": zm, "std_error": zse,
               "n": int(cfg["n_mc"]), "seed_base": int(cfg["seed_base"])}, "drift": b.tag, "passed": bool(ok)})
    return bool(ok), ["girsanov.json"]


def run_solve(cfg, out, workers):
    grid, h = _setup(cfg)
    b = _drift(cfg)
    d, seed = int(cfg["d"]), int(cfg["seed_base"])
    noise = sample_fbs_kernel(grid, h, d, seed) if cfg["route"] == "kernel" else sample_fbs_cholesky(grid, h, d, seed)
    sol = euler_solve(b, cfg["x0"], noise)
    sol.to_csv(out / "solution.csv")
    x0 = sol.x0[:, None]
    ok = bool(np.allclose(sol.values[:, 0, :], x0, atol=0) and np.allclose(sol.values[:, :, 0], x0, atol=0))
    write_json(out / "solve.json", {"drift": b.tag, "boundary_ok": ok, "x_TT": sol.values[:, -1, -1]})
    return ok, ["solution.csv", "solve.json"]


def run_converge(cfg, out, workers):
    grid, h = _setup(cfg)
    b = _drift(cfg)
    table = convergence_study(b, cfg["x0"], h, [int(n) for n in cfg["levels"]], int(cfg["n_mc"]), grid,
                              int(cfg["seed_base"]), workers)
    table.to_csv(out / "convergence.csv")
    ok = table.is_decreasing()
    write_json(out / "converge.json", {"drift": b.tag, "decreasing": ok, "warnings": table.warnings,
                                       "rows": [list(r) for r in table.rows]})
    return ok, ["convergence.csv", "converge.json"]


def run_malliavin(cfg, out, workers):
    grid, h = _setup(cfg)
    b = _drift(cfg)
    if not b.smooth:
        b = mollify_drift(b, 8)
    fd, pred = malliavin_fd_check(b, cfg["x0"], h, tuple(cfg["rect"]), float(cfg["eps"]), int(cfg["seed_base"]), grid)
    rel = abs(fd - pred) / max(abs(pred), 1e-300)
    ok = rel < cfg["rel_tol"]
    write_json(out / "malliavin.json", {"finite_difference": fd, "prediction": pred, "relative_mismatch": rel,
                                        "drift": b.tag, "passed": ok})
    return ok, ["malliavin.json"]


def run_ibp(cfg, out, workers):
    grid, h = _setup(cfg)
    test = gaussian_bump_test(cfg["amp"], cfg["center"], cfg["width"])
    rows, ok = [], True
    for k in range(int(cfg["n_seeds"])):
        seed = rng.derive_seed(cfg["seed_base"], "ibp", k)
        for alpha, tol in ((0, cfg["tol_alpha0"]), (1, cfg["tol_alpha1"])):
            lhs, rhs = ibp_check(test, tuple(cfg["rect"]), h, seed, alpha, grid)
            mis = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-12)
            ok &= mis < tol
            rows.append({"replication": k, "alpha": alpha, "lhs": lhs, "rhs": rhs, "mismatch": mis})
    write_json(out / "ibp.json", {"lemma": "integration by parts", "trials": len(rows),
                                  "worst_margin": max(r["mismatch"] for r in rows), "config": cfg, "rows": rows})
    return bool(ok), ["ibp.json"]


def run_betachain(cfg, out, workers):
    rows, ok = [], True
    for i, c in enumerate(cfg["configs"]):
        p = BetaChainParams(tuple(c["a"]), tuple(c["v"]), c.get("r", 0.0), c.get("s", 1.0))
        closed, rec = beta_chain_integral(p), beta_chain_recursive(p)
        est, se = mc_simplex_integral(p, int(cfg["n_mc"]), rng.derive_seed(cfg["seed_base"], "betachain", i))
        good = abs(closed - est) <= 3 * se + 1e-14 and abs(closed - rec) <= 1e-12 * abs(closed)
        ok &= good
        rows.append({"a": list(p.a), "v": list(p.v), "closed_form": closed, "recursive": rec,
                     "mc_estimate": est, "mc_std_error": se, "passed": good})
    write_json(out / "betachain.json", {"rows": rows, "passed": bool(ok)})
    return bool(ok), ["betachain.json"]


def run_shuffles(cfg, out, workers):
    rows, ok = [], True
    for m, k in cfg["pairs"]:
        S = enumerate_shuffles(int(m), int(k))
        rows.append({"m": m, "k": k, "count": len(S), "expected": S.expected_count})
        ok &= len(S) == S.expected_count
    pm, pk = cfg["partition"]
    rep = partition_check(int(pm), int(pk), int(cfg["n_samples"]), int(cfg["seed_base"]))
    ok &= rep.exactly_one == rep.n_samples
    write_json(out / "shuffles.json", {"counts": rows, "partition": rep.to_dict(), "passed": bool(ok)})
    return bool(ok), ["shuffles.json"]


RUNNERS = {
    "simulate": run_simulate, "covcheck": run_covcheck, "slnd": run_slnd, "girsanov": run_girsanov,
    "solve": run_solve, "converge": run_converge, "malliavin": run_malliavin, "ibp": run_ibp,
    "betachain": run_betachain, "shuffles": run_shuffles,
}


def run_experiment(experiment: str, cfg: dict, out_dir, workers: int = 1) -> bool:
    """Run one experiment with a validated config; returns whether its checks passed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok, artifacts = RUNNERS[experiment](cfg, out, workers)
    write_manifest(out, experiment, cfg, artifacts, bool(ok))
    return bool(ok)


def _defaults_epilog() -> str:
    lines = ["defaults shared by every experiment:", "  " + json.dumps(COMMON, sort_keys=True), ""]
    for name, extra in EXPERIMENTS.items():
        lines.append(f"{name}: " + json.dumps(extra, sort_keys=True))
    lines += ["", "exit status: 0 all checks passed, 1 a check failed, 2 usage or config error"]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbsheet", description="Fractional Brownian sheet experiments.",
        epilog=_defaults_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment",
                           epilog=f"defaults: {json.dumps({**COMMON, **EXPERIMENTS[name]}, sort_keys=True)}")
        p.add_argument("--config", metavar="PATH", help="JSON file overriding the defaults")
        p.add_argument("--seed", type=int, metavar="N", help="seed base (overrides the config)")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
        p.add_argument("--override-hurst-gate", action="store_true",
                       help="allow h1 + h2 >= 1/(2(d+1)) for exploratory runs")
        p.add_argument("--workers", type=int, default=1, metavar="N",
                       help="worker threads; results do not depend on it (default: 1)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config, args.seed, args.override_hurst_gate)
    except ConfigError as exc:
        print(f"fbsheet: error: {exc}", file=sys.stderr)
        return 2
    try:
        ok = run_experiment(args.experiment, cfg, args.out, max(1, args.workers))
    except (ConfigError, FbsheetError, KeyError, TypeError) as exc:
        print(f"fbsheet: error: {exc}", file=sys.stderr)
        return 2
    status = "passed" if ok else "FAILED"
    print(f"{args.experiment}: {status} (artifacts in {args.out})")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
