"""Uniform grids on [0, T]^2 and fields sampled on their nodes."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import GridMismatchError, PreconditionError


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular discretization of ``[0, t_max]^2``.

    Nodes are ``s_i = i * t_max / n_s`` and ``t_j = j * t_max / n_t``; both
    axes are included, so a field on the grid has shape ``(n_s + 1, n_t + 1)``.
    """

    t_max: float
    n_s: int
    n_t: int

    def __post_init__(self):
        if not self.t_max > 0:
            raise PreconditionError(f"t_max must be positive, got {self.t_max}")
        if self.n_s < 1 or self.n_t < 1:
            raise PreconditionError(f"cell counts must be >= 1, got {self.n_s}x{self.n_t}")

    @classmethod
    def square(cls, t_max: float, n: int) -> "Grid2D":
        return cls(float(t_max), int(n), int(n))

    @property
    def ds(self) -> float:
        return self.t_max / self.n_s

    @property
    def dt(self) -> float:
        return self.t_max / self.n_t

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.n_s + 1) * self.ds

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_s + 1, self.n_t + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.s, self.t, indexing="ij")

    def interior_points(self) -> np.ndarray:
        """Nodes off both axes as an ``(n_s * n_t, 2)`` array, row-major in s."""
        S, T = np.meshgrid(self.s[1:], self.t[1:], indexing="ij")
        return np.column_stack([S.ravel(), T.ravel()])

    def node_index(self, s: float, t: float) -> tuple[int, int]:
        """Index of the node at ``(s, t)``; raises if the point is not a node."""
        i = s / self.ds
        j = t / self.dt
        ii, jj = int(round(i)), int(round(j))
        if abs(i - ii) > 1e-9 or abs(j - jj) > 1e-9 or not (0 <= ii <= self.n_s and 0 <= jj <= self.n_t):
            raise PreconditionError(f"({s}, {t}) is not a node of {self}")
        return ii, jj


def check_same_grid(a: Grid2D, b: Grid2D) -> None:
    if a != b:
        raise GridMismatchError(f"grids differ: {a} vs {b}")


@dataclass
class SampledFn2D:
    """A real function sampled on every node of a :class:`Grid2D`."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"values have shape {self.values.shape}, grid expects {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("sampled values must be finite at every node")

    @classmethod
    def from_callable(cls, grid: Grid2D, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "SampledFn2D":
        S, T = grid.mesh()
        return cls(grid, np.broadcast_to(f(S, T), grid.shape).astype(float))

    def __add__(self, other: "SampledFn2D") -> "SampledFn2D":
        check_same_grid(self.grid, other.grid)
        return SampledFn2D(self.grid, self.values + other.values)

    def __mul__(self, scalar: float) -> "SampledFn2D":
        return SampledFn2D(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def to_csv(self, path) -> None:
        """Write ``s,t,value`` rows, row-major in ``s``."""
        S, T = self.grid.mesh()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "value"])
            for s, t, v in zip(S.ravel(), T.ravel(), self.values.ravel()):
                w.writerow([repr(float(s)), repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, grid: Grid2D) -> "SampledFn2D":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != grid.shape[0] * grid.shape[1]:
            raise GridMismatchError(f"{path} has {data.shape[0]} rows, grid needs {grid.shape[0] * grid.shape[1]}")
        return cls(grid, data[:, 2].reshape(grid.shape))
