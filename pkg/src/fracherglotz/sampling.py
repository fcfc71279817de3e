"""Uniform time grids and functions sampled on them."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

# Allowed deviation from exact uniformity, in units of eps * (b - a).
_UNIFORMITY_SLACK = 8.0


class GridMismatchError(ValueError):
    """Raised when two sampled functions do not live on the same grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform mesh on [a, b] with ``n_points`` nodes, endpoints included."""

    a: float
    b: float
    n_points: int

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"grid needs a < b, got [{self.a}, {self.b}]")
        if self.n_points < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.n_points}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n_points)

    @classmethod
    def from_nodes(cls, nodes: Sequence[float]) -> "Grid":
        """Build a grid from explicit nodes, validating uniform spacing."""
        t = np.asarray(nodes, dtype=float)
        if t.ndim != 1 or t.size < 3:
            raise ValueError("need a one-dimensional array of at least 3 nodes")
        if not np.all(np.diff(t) > 0):
            raise ValueError("nodes must be strictly increasing")
        a, b = float(t[0]), float(t[-1])
        grid = cls(a, b, int(t.size))
        dev = float(np.max(np.abs(t - grid.nodes)))
        tol = _UNIFORMITY_SLACK * np.finfo(float).eps * (b - a)
        if dev > tol:
            raise ValueError(
                f"nodes deviate from a uniform mesh by {dev:.3e} (allowed {tol:.3e})"
            )
        return grid

    def refine(self, factor: int = 2) -> "Grid":
        """Grid with the same interval and (n-1)*factor + 1 nodes."""
        return Grid(self.a, self.b, (self.n_points - 1) * factor + 1)


@dataclass(frozen=True)
class SampledFunction:
    """Scalar function sampled on a grid, optionally with derivative rows.

    ``derivs[k-1]`` holds samples of the k-th classical derivative; rows are
    only attached when the caller actually has them (exact formulas, solver
    output) and operators fall back to difference schemes otherwise.
    """

    grid: Grid
    values: np.ndarray
    derivs: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} samples, got shape {v.shape}"
            )
        rows = tuple(np.asarray(row, dtype=float) for row in self.derivs)
        object.__setattr__(self, "derivs", rows)
        for row in rows:
            if row.shape != v.shape:
                raise ValueError("derivative rows must match the value samples")

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray],
                      derivs: Sequence[Callable] = ()) -> "SampledFunction":
        t = grid.nodes
        return cls(grid, np.asarray(fn(t), dtype=float) * np.ones_like(t),
                   tuple(np.asarray(d(t), dtype=float) * np.ones_like(t) for d in derivs))

    def with_values(self, values: np.ndarray) -> "SampledFunction":
        return SampledFunction(self.grid, values)

    def check_same_grid(self, other: "SampledFunction") -> None:
        if self.grid != other.grid:
            raise GridMismatchError(
                f"grids differ: {self.grid} vs {other.grid}"
            )

    # -- CSV round trip: header `t,value[,d1,d2,...]`, one row per node --

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        header = ["t", "value"] + [f"d{k + 1}" for k in range(len(self.derivs))]
        buf.write(",".join(header) + "\n")
        cols = [self.grid.nodes, self.values, *self.derivs]
        for row in zip(*cols):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "SampledFunction":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines:
            raise ValueError(f"{path}: empty CSV")
        header = [c.strip() for c in lines[0].split(",")]
        if header[:2] != ["t", "value"]:
            raise ValueError(f"{path}: expected header 't,value[,d1,...]'")
        data = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
        if data.ndim != 2 or data.shape[1] != len(header):
            raise ValueError(f"{path}: ragged or empty CSV body")
        grid = Grid.from_nodes(data[:, 0])
        return cls(grid, data[:, 1], tuple(data[:, 2 + k] for k in range(data.shape[1] - 2)))


def trapezoid(values: np.ndarray, h: float) -> float:
    """Composite trapezoidal rule on a uniform grid."""
    v = np.asarray(values, dtype=float)
    return float(h * (np.sum(v) - 0.5 * (v[0] + v[-1])))


def cumulative_trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    """Running trapezoidal integral, zero at the first node."""
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    out[1:] = np.cumsum(0.5 * h * (v[1:] + v[:-1]))
    return out
