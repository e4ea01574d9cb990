import json
import subprocess
import sys

import pytest

from fbsheet.cli import EXPERIMENTS, build_parser, default_config, main

FAST = {
    "simulate": {},
    "covcheck": {"n_mc": 600},
    "slnd": {"trials": 50},
    "girsanov": {"n_mc": 300, "n": 16},
    "solve": {},
    "converge": {"levels": [1, 2, 4], "n_mc": 20, "n": 8},
    "malliavin": {"n": 16},
    "ibp": {"n_seeds": 2, "n": 16},
    "betachain": {"n_mc": 20000},
    "shuffles": {"n_samples": 500},
}


def write_cfg(tmp_path, name, cfg):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_every_experiment_has_fast_config():
    assert set(FAST) == set(EXPERIMENTS)


def test_covcheck_default_config_passes(tmp_path):
    assert main(["covcheck", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "covcheck.json").read_text())
    assert rep["passed"] and (tmp_path / "cov_matrix.csv").exists()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["n_mc"] == EXPERIMENTS["covcheck"]["n_mc"] and man["seed_base"] == 1


def test_hurst_gate_rejected_without_override(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "g", {"h": [0.4, 0.4], "d": 1})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "0.8" in capsys.readouterr().err
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"), "--override-hurst-gate"]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config"]["override_hurst_gate"] is True


@pytest.mark.parametrize("content", [None, "{not json", "[1, 2]", '{"bogus": 1}', '{"h": [0.1, 0.6]}',
                                     '{"n_mc": 1}', '{"drift": {"type": "nope"}}', '{"h": "x"}'])
def test_invalid_configs_exit_2(tmp_path, content):
    path = tmp_path / "c.json"
    if content is not None:
        path.write_text(content)
    assert main(["girsanov", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_contract_failure_exits_1(tmp_path):
    cfg = write_cfg(tmp_path, "m", {"n": 16, "rel_tol": 1e-12})
    assert main(["malliavin", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "malliavin.json").read_text())["passed"] is False
    assert json.loads((tmp_path / "manifest.json").read_text())["passed"] is False


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    out = capsys.readouterr().out
    for name in EXPERIMENTS:
        assert name in out
    assert '"seed_base": 1' in out


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, "s", {"seed_base": 5, "trials": 20})
    assert main(["slnd", "--config", cfg, "--seed", "9", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "slnd.json").read_text())
    assert rep["config"]["seed_base"] == 9 and rep["lemma"] and rep["trials"] == 20 and rep["worst_margin"] > 0


def test_default_configs_validate():
    for name in EXPERIMENTS:
        cfg = default_config(name)
        assert cfg["h"] == [0.1, 0.1] and cfg["seed_base"] == 1


@pytest.mark.parametrize("name", sorted(FAST))
def test_payloads_identical_across_workers(tmp_path, name):
    cfg = write_cfg(tmp_path, name, FAST[name])
    outs = []
    for workers in (1, 3):
        out = tmp_path / f"w{workers}"
        code = main([name, "--config", cfg, "--out", str(out), "--workers", str(workers)])
        assert code == 0
        outs.append(out)
    man = json.loads((outs[0] / "manifest.json").read_text())
    for art in man["artifacts"]:
        assert (outs[0] / art).read_bytes() == (outs[1] / art).read_bytes()


def test_girsanov_record_fields(tmp_path):
    cfg = write_cfg(tmp_path, "g", FAST["girsanov"])
    assert main(["girsanov", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "girsanov.json").read_text())
    for rec in rep["functionals"] + [rep["doleans"]]:
        assert {"estimate", "std_error", "n", "seed_base"} <= set(rec)


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fbsheet.cli", "shuffles", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "passed" in proc.stdout
