"""Lagrangian definitions, the built-in problem registry, and config files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .exprlang import (
    EvalPoint,
    ExprDomainError,
    evaluate,
    max_var_index,
    parse,
)
from .sampling import Grid, SampledFunction

__all__ = [
    "LagrangianDef",
    "ProblemDefinition",
    "TrajectorySpec",
    "UnknownProblemError",
    "ConfigError",
    "builtin_problem",
    "builtin_problem_names",
    "load_problem_file",
    "load_solver_options",
    "make_trajectory",
]

FREE = None  # right-endpoint marker: no boundary value prescribed


class UnknownProblemError(ValueError):
    """Requested a built-in problem that does not exist."""


class ConfigError(ValueError):
    """Problem config file is malformed or incomplete."""


@dataclass(frozen=True)
class LagrangianDef:
    """Lagrangian expression with its dimension and fractional orders.

    ``orders[j]`` is the order of the Caputo derivative feeding d<j+1>;
    each must lie in (0, 1) or, for the higher-order residuals, in (1, 2).
    """

    dimension: int
    expr: object
    orders: tuple
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(float(a) for a in self.orders))
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if len(self.orders) != self.dimension:
            raise ValueError(
                f"{self.dimension} components need {self.dimension} orders,"
                f" got {len(self.orders)}"
            )
        for a in self.orders:
            if not 0.0 < a < 2.0:
                raise ValueError(f"orders must lie in (0,2), got {a}")
        if max_var_index(self.expr) > self.dimension:
            raise ValueError(
                f"expression uses a variable index above the dimension {self.dimension}"
            )

    @classmethod
    def from_source(cls, src: str, dimension: int, orders) -> "LagrangianDef":
        return cls(dimension, parse(src), tuple(orders), source=src)


@dataclass(frozen=True)
class ProblemDefinition:
    """A named variational problem: Lagrangian, interval, and boundary data.

    ``bc_right`` entries are either a number (fixed endpoint) or None (free
    endpoint, handled through the transversality condition).
    """

    name: str
    lagrangian: LagrangianDef
    a: float
    b: float
    z_init: float
    bc_left: tuple
    bc_right: tuple

    def __post_init__(self):
        object.__setattr__(self, "bc_left", tuple(float(v) for v in self.bc_left))
        object.__setattr__(
            self,
            "bc_right",
            tuple(None if v is None else float(v) for v in self.bc_right),
        )
        n = self.lagrangian.dimension
        if len(self.bc_left) != n or len(self.bc_right) != n:
            raise ValueError("boundary data must have one entry per component")
        if not self.a < self.b:
            raise ValueError("interval must satisfy a < b")

    def grid(self, n_points: int) -> Grid:
        return Grid(self.a, self.b, n_points)

    def validate_evaluation(self) -> None:
        """Check the Lagrangian evaluates on a simple admissible trajectory."""
        n = self.lagrangian.dimension
        for frac in (0.0, 0.35, 0.8, 1.0):
            t = self.a + frac * (self.b - self.a)
            x = tuple(
                l + frac * ((r if r is not None else l) - l)
                for l, r in zip(self.bc_left, self.bc_right)
            )
            try:
                evaluate(
                    self.lagrangian.expr,
                    EvalPoint(t=t, x=x, d=(0.0,) * n, z=self.z_init),
                )
            except ExprDomainError as exc:
                raise ConfigError(
                    f"Lagrangian is undefined on the initial trajectory at t={t}: {exc}"
                ) from exc


# --------------------------------------------------------------------------
# Built-in problems
# --------------------------------------------------------------------------

_EXAMPLE_INTEGRAND = "pow(d1 - 2/gamma(2.5)*pow(t,1.5), 2)"


def _example1() -> ProblemDefinition:
    lag = LagrangianDef.from_source(_EXAMPLE_INTEGRAND, 1, (0.5,))
    return ProblemDefinition("example1", lag, 0.0, 1.0, 0.0, (0.0,), (1.0,))


def _example2() -> ProblemDefinition:
    lag = LagrangianDef.from_source(_EXAMPLE_INTEGRAND + "*exp(t) + z", 1, (0.5,))
    return ProblemDefinition("example2", lag, 0.0, 1.0, 1.0, (0.0,), (1.0,))


def _example3() -> ProblemDefinition:
    # same functional as example1; registered separately because it is the
    # target of the expansion-based solver pipeline
    lag = LagrangianDef.from_source(_EXAMPLE_INTEGRAND, 1, (0.5,))
    return ProblemDefinition("example3", lag, 0.0, 1.0, 0.0, (0.0,), (1.0,))


def _noether_gamma(f_exponent: float = 2, gamma_coeff: float = 0.1,
                   alpha: float = 0.7) -> ProblemDefinition:
    """Shift-invariant Lagrangian f(d1) - gamma*z with f(v) = v^p.

    alpha defaults to 0.7: for alpha <= 1/2 the stationarity condition has
    no bounded nontrivial solution on [0,1] (the kernel profile (b-t)^(a-1)
    is not square-integrable against the left integral), so the conserved
    quantity demonstration needs alpha in (1/2, 1).
    """
    if not gamma_coeff > 0:
        raise ValueError("gamma must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0,1)")
    p = float(f_exponent)
    src = f"pow(d1, {p!r}) - {float(gamma_coeff)!r}*z"
    lag = LagrangianDef.from_source(src, 1, (alpha,))
    return ProblemDefinition("noether_gamma", lag, 0.0, 1.0, 0.0, (0.0,), (1.0,))


_BUILTINS = {
    "example1": _example1,
    "example2": _example2,
    "example3": _example3,
    "noether_gamma": _noether_gamma,
}


def builtin_problem_names() -> tuple:
    return tuple(sorted(_BUILTINS))


def builtin_problem(name: str, **params) -> ProblemDefinition:
    """Look up a registered problem; noether_gamma accepts keyword params."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UnknownProblemError(
            f"unknown problem {name!r}; available: {', '.join(builtin_problem_names())}"
        ) from None
    if params and name != "noether_gamma":
        raise UnknownProblemError(f"problem {name!r} takes no parameters")
    problem = factory(**params)
    problem.validate_evaluation()
    return problem


# --------------------------------------------------------------------------
# Config files: plain `key = value` lines, '#' comments.  Keys: dimension,
# orders, interval, z_init, lagrangian, bc.left, bc.right.  List values are
# comma separated; a bc.right entry may be the keyword `free`.
# --------------------------------------------------------------------------

_REQUIRED_KEYS = ("dimension", "orders", "interval", "z_init", "lagrangian",
                  "bc.left", "bc.right")
_SOLVER_KEYS = ("solver.tol", "solver.max_iter", "solver.slope_range")


def _parse_kv(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _floats(value: str, key: str) -> tuple:
    try:
        return tuple(float(part) for part in value.split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {value!r}") from exc


def load_problem_file(path) -> ProblemDefinition:
    """Load a problem from a key-value config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    kv = _parse_kv(path.read_text())
    missing = [k for k in _REQUIRED_KEYS if k not in kv]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    unknown = [k for k in kv if k not in _REQUIRED_KEYS + _SOLVER_KEYS]
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    try:
        dimension = int(kv["dimension"])
    except ValueError as exc:
        raise ConfigError(f"dimension: not an integer: {kv['dimension']!r}") from exc
    orders = _floats(kv["orders"], "orders")
    interval = _floats(kv["interval"], "interval")
    if len(interval) != 2:
        raise ConfigError("interval: expected exactly two numbers 'a, b'")
    z_init = _floats(kv["z_init"], "z_init")[0]
    bc_left = _floats(kv["bc.left"], "bc.left")
    bc_right = []
    for part in kv["bc.right"].split(","):
        part = part.strip()
        if part == "free":
            bc_right.append(None)
        else:
            bc_right.append(_floats(part, "bc.right")[0])
    try:
        lag = LagrangianDef.from_source(kv["lagrangian"], dimension, orders)
        problem = ProblemDefinition(
            path.stem, lag, interval[0], interval[1], z_init,
            bc_left, tuple(bc_right),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    problem.validate_evaluation()
    return problem


def load_solver_options(path) -> dict:
    """Optional solver settings from the same config file (solver.* keys)."""
    kv = _parse_kv(Path(path).read_text())
    out = {}
    if "solver.tol" in kv:
        out["tol"] = _floats(kv["solver.tol"], "solver.tol")[0]
    if "solver.max_iter" in kv:
        try:
            out["max_iter"] = int(kv["solver.max_iter"])
        except ValueError as exc:
            raise ConfigError("solver.max_iter: not an integer") from exc
    if "solver.slope_range" in kv:
        rng = _floats(kv["solver.slope_range"], "solver.slope_range")
        if len(rng) != 2:
            raise ConfigError("solver.slope_range: expected 'lo, hi'")
        out["slope_range"] = rng
    return out


# --------------------------------------------------------------------------
# Built-in trajectory specs for the CLI and tests: pow:p, const:c, line:m:c
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySpec:
    """Closed-form trajectory `pow:p` ((t-a)^p), `const:c`, or `line:m:c`."""

    kind: str
    params: tuple

    def sample(self, grid: Grid) -> SampledFunction:
        t = grid.nodes
        if self.kind == "pow":
            return SampledFunction(grid, (t - grid.a) ** self.params[0])
        if self.kind == "const":
            return SampledFunction(grid, np.full_like(t, self.params[0]))
        m, c = self.params
        return SampledFunction(grid, m * t + c)

    def left_power_terms(self, grid: Grid) -> Optional[tuple]:
        """(coefficient, exponent) pairs in powers of (t - a), if available."""
        if self.kind == "pow":
            return ((1.0, self.params[0]),)
        if self.kind == "const":
            return ((self.params[0], 0.0),)
        m, c = self.params
        return ((c + m * grid.a, 0.0), (m, 1.0))

    def right_power_terms(self, grid: Grid) -> Optional[tuple]:
        """(coefficient, exponent) pairs in powers of (b - t), if available."""
        if self.kind == "const":
            return ((self.params[0], 0.0),)
        if self.kind == "line":
            m, c = self.params
            return ((c + m * grid.b, 0.0), (-m, 1.0))
        return None


def make_trajectory(spec: str) -> TrajectorySpec:
    """Parse a trajectory spec string such as 'pow:2' or 'line:1:0'."""
    parts = spec.split(":")
    kind = parts[0]
    try:
        if kind == "pow" and len(parts) == 2:
            return TrajectorySpec("pow", (float(parts[1]),))
        if kind == "const" and len(parts) == 2:
            return TrajectorySpec("const", (float(parts[1]),))
        if kind == "line" and len(parts) == 3:
            return TrajectorySpec("line", (float(parts[1]), float(parts[2])))
    except ValueError as exc:
        raise ConfigError(f"bad trajectory spec {spec!r}: {exc}") from exc
    raise ConfigError(
        f"bad trajectory spec {spec!r}; use pow:p, const:c or line:m:c"
    )
