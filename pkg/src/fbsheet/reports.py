"""JSON reports and run manifests."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def canonical_json(obj) -> str:
    """Deterministic serialization: sorted keys, fixed separators, no NaN literals."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj))
    return path


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_manifest(out_dir, experiment: str, config: dict, artifacts: list[str], passed: bool) -> Path:
    """Manifest of one run: config and its hash, seed, code version, artifacts.

    The timestamp lives only here, so the payload files are reproducible.
    """
    manifest = {
        "experiment": experiment,
        "config": config,
        "config_hash": config_hash(config),
        "seed_base": config.get("seed_base"),
        "code_version": __version__,
        "artifacts": sorted(artifacts),
        "passed": passed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return write_json(Path(out_dir) / "manifest.json", manifest)
