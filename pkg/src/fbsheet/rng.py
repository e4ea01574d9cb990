"""Seeded, splittable random streams and deterministic replication.

Every stream is a Philox counter-based generator keyed by a 64-bit seed.
Seeds for sub-streams (per channel, per replication) are derived by hashing,
so results never depend on how replications are distributed over workers.
Normal variates are produced by the inverse CDF of 53-bit uniforms.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

#: Replications are always processed in chunks of this size, whatever the
#: number of workers, so floating-point results do not depend on parallelism.
CHUNK = 256

_TWO53 = float(2**53)


def derive_seed(seed_base: int, *tags) -> int:
    """Hash ``seed_base`` and an arbitrary tag tuple into a 64-bit seed."""
    text = ":".join([str(int(seed_base))] + [str(t) for t in tags])
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


def uniforms(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = gen.integers(0, 2**53, size=size, dtype=np.int64)
    return (k.astype(float) + 0.5) / _TWO53


def normals(gen: np.random.Generator, size) -> np.ndarray:
    return ndtri(uniforms(gen, size))


def replication_seeds(seed_base: int, name: str, n: int) -> list[int]:
    return [derive_seed(seed_base, name, r) for r in range(n)]


def run_chunked(
    fn: Callable[[Sequence[int]], np.ndarray],
    seeds: Sequence[int],
    workers: int = 1,
) -> np.ndarray:
    """Apply ``fn`` to fixed-size chunks of ``seeds`` and stack the results.

    ``fn`` receives a chunk of seeds and returns an array whose leading axis
    matches the chunk. Chunks are concatenated in seed order.
    """
    chunks = [seeds[i:i + CHUNK] for i in range(0, len(seeds), CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return np.concatenate(parts, axis=0)


def mean_and_se(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error along the first axis."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return mean, se
