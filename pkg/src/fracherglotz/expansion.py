"""Truncated-expansion reduction of the fractional problem and its solver.

The Caputo derivative is replaced by a finite sum of integer-order
derivatives with power weights,

    cD_a^alpha x(t)  ~  sum_{k=0..N} binom(alpha,k) (t-a)^{k-alpha}
                        / Gamma(k+1-alpha) * x^(k)(t)
                        - x(a) (t-a)^{-alpha} / Gamma(1-alpha),

turning the Herglotz problem into a classical higher-order one.  The k = 0
term and the correction are folded into (x(t) - x(a)) (t-a)^{-alpha}
/ Gamma(1-alpha), whose limit at t = a is finite for Lipschitz x; that
removes the only genuine singularity without regularization knobs.  With
two boundary values the truncation order is N = 1 and the reduced
stationarity equation is an explicit second-order ODE, solved by shooting
on the unknown initial slope (bracket scan, then secant).  Integration
starts one node after a to step over the (t-a)^{-alpha} weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from functools import lru_cache

from .exprlang import Dual, compile_expr, diff_expr
from .fracops import MissingDerivativeError, binom_frac, rgamma
from .herglotz import HerglotzProblem
from .problems import LagrangianDef
from .sampling import Grid, GridMismatchError, SampledFunction, cumulative_trapezoid

__all__ = [
    "ExpansionSpec",
    "ReducedLagrangian",
    "ShootingResult",
    "SolverSettings",
    "ComparisonTable",
    "DimensionError",
    "NoBracketError",
    "StiffnessError",
    "caputo_expansion",
    "build_reduced_lagrangian",
    "solve_reduced_herglotz",
    "solve_problem",
    "self_consistency_residual",
    "emit_comparison",
]


class DimensionError(ValueError):
    """The reduction is single-component only."""


class NoBracketError(RuntimeError):
    """The slope scan found no sign change in the terminal mismatch."""


class StiffnessError(RuntimeError):
    """Integration blew up or the iteration failed to converge."""


@dataclass(frozen=True)
class ExpansionSpec:
    """Truncation order N, expansion base point, and the fractional order.

    alpha = 1.0 is allowed as the exact classical limit: the reciprocal
    gamma factors vanish and the expansion collapses to x'(t).
    """

    n_terms: int
    base: float
    alpha: float

    def __post_init__(self):
        if self.n_terms < 0:
            raise ValueError("truncation order must be non-negative")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"expansion needs alpha in (0,1], got {self.alpha}")


def caputo_expansion(x: SampledFunction, spec: ExpansionSpec) -> SampledFunction:
    """Truncated derivative expansion of the left Caputo derivative.

    Needs derivative rows 1..N attached; exact (to rounding) for
    polynomials of degree <= N once the combined k = 0 term absorbs x(a).
    The value at t = a is the (finite) limit 0.
    """
    if abs(spec.base - x.grid.a) > 1e-12 * max(1.0, abs(x.grid.a)):
        raise ValueError("expansion base must be the grid's left endpoint")
    if len(x.derivs) < spec.n_terms:
        raise MissingDerivativeError(
            f"expansion with N={spec.n_terms} needs derivative rows 1..{spec.n_terms}"
        )
    alpha = spec.alpha
    s = x.grid.nodes - spec.base
    out = np.zeros(x.grid.n_points)
    pos = s[1:]
    out[1:] = (x.values[1:] - x.values[0]) * pos ** (-alpha) * rgamma(1.0 - alpha)
    for k in range(1, spec.n_terms + 1):
        coef = binom_frac(alpha, k) * rgamma(k + 1.0 - alpha)
        out[1:] += coef * pos ** (k - alpha) * x.derivs[k - 1][1:]
    return SampledFunction(x.grid, out)


@dataclass(frozen=True)
class ReducedLagrangian:
    """Classical Lagrangian obtained by substituting the expansion for d1.

    Evaluation composes the original expression with
    E(t, x, x', .., x^(N)) so the regularized k = 0 term never goes through
    the parser; partial derivatives chain through the substitution.
    """

    lagrangian: LagrangianDef
    spec: ExpansionSpec
    x_init: float

    def __post_init__(self):
        if self.lagrangian.dimension != 1:
            raise DimensionError("the reduction supports a single component only")

    # weight in front of (x - x_init) after folding the Caputo correction
    def _w0(self, s: float) -> float:
        return s ** (-self.spec.alpha) * rgamma(1.0 - self.spec.alpha)

    def _w0_dt(self, s: float) -> float:
        a = self.spec.alpha
        return -a * s ** (-a - 1.0) * rgamma(1.0 - a)

    def _wk(self, k: int, s: float) -> float:
        a = self.spec.alpha
        return binom_frac(a, k) * s ** (k - a) * rgamma(k + 1.0 - a)

    def _wk_dt(self, k: int, s: float) -> float:
        a = self.spec.alpha
        return binom_frac(a, k) * (k - a) * s ** (k - a - 1.0) * rgamma(k + 1.0 - a)

    def expansion_value(self, t: float, x: float, derivs) -> float:
        """E(t, x, x', ..) for t strictly above the base point."""
        s = t - self.spec.base
        out = (x - self.x_init) * self._w0(s)
        for k, dk in enumerate(derivs[: self.spec.n_terms], start=1):
            out += self._wk(k, s) * dk
        return out

    def value(self, t: float, x: float, derivs, z: float) -> float:
        e = self.expansion_value(t, x, derivs)
        return compile_expr(self.lagrangian.expr)(t, (x,), (e,), z)

    # ---- N = 1 machinery for the solver --------------------------------

    def _coeffs(self, t: float) -> tuple:
        s = t - self.spec.base
        return self._w0(s), self._wk(1, s), self._w0_dt(s), self._wk_dt(1, s)

    def state_partials(self, t: float, x: float, v: float, z: float) -> dict:
        """First and mixed-second partials of the reduced Lagrangian.

        The base expression and its symbolic derivatives (compiled once per
        Lagrangian) are evaluated at (t, x, E, z); the chain rule through
        E = A (x - x_init) + B v produces everything the explicit
        second-order form of the stationarity equation needs.
        """
        if self.spec.n_terms != 1:
            raise ValueError("state_partials is the N = 1 path")
        A, B, dA, dB = self._coeffs(t)
        e = A * (x - self.x_init) + B * v
        fns = _derivative_bundle(self.lagrangian.expr)
        xs, ds = (x,), (e,)
        L_d = fns["Ld"](t, xs, ds, z)
        L_dd = fns["Ldd"](t, xs, ds, z)
        e_t = dA * (x - self.x_init) + dB * v
        return {
            "value": fns["L"](t, xs, ds, z),
            "E": e,
            "Lbar_x": fns["Lx"](t, xs, ds, z) + L_d * A,
            "phi": L_d * B,  # dLbar/dx'
            "Lbar_z": fns["Lz"](t, xs, ds, z),
            "phi_t": (fns["Ldt"](t, xs, ds, z) + L_dd * e_t) * B + L_d * dB,
            "phi_x": (fns["Ldx"](t, xs, ds, z) + L_dd * A) * B,
            "phi_v": L_dd * B * B,
            "phi_z": fns["Ldz"](t, xs, ds, z) * B,
        }

    def grid_partials(self, t: np.ndarray, x: np.ndarray, v: np.ndarray,
                      z: np.ndarray) -> dict:
        """Vectorized first partials of the reduced Lagrangian (N = 1).

        The entry at the base node is zeroed: the expansion weight is
        singular there and every consumer excludes that node anyway.
        """
        a = self.spec.alpha
        s = t[1:] - self.spec.base
        A = s ** (-a) * rgamma(1.0 - a)
        B = binom_frac(a, 1) * s ** (1.0 - a) * rgamma(2.0 - a)
        e = A * (x[1:] - self.x_init) + B * v[1:]
        xd = Dual(x[1:], (1.0, 0.0, 0.0))
        dd = Dual(e, (0.0, 1.0, 0.0))
        zd = Dual(z[1:], (0.0, 0.0, 1.0))
        out = compile_expr(self.lagrangian.expr)(t[1:], (xd,), (dd,), zd)
        shape = s.shape

        def full(u):
            return np.broadcast_to(np.asarray(u, dtype=float), shape).copy()

        if isinstance(out, Dual):
            val, (L_x, L_d, L_z) = out.val, out.eps
        else:
            val, L_x, L_d, L_z = out, 0.0, 0.0, 0.0

        def pad(u):
            arr = np.zeros(t.shape)
            arr[1:] = u
            return arr

        return {
            "value": pad(full(val)),
            "Lbar_x": pad(full(L_x) + full(L_d) * A),
            "phi": pad(full(L_d) * B),
            "Lbar_z": pad(full(L_z)),
        }


@lru_cache(maxsize=64)
def _derivative_bundle(expr) -> dict:
    """Compiled expression, gradient, and d-row of the Hessian."""
    ld = diff_expr(expr, "d1")
    return {
        "L": compile_expr(expr),
        "Lx": compile_expr(diff_expr(expr, "x1")),
        "Ld": compile_expr(ld),
        "Lz": compile_expr(diff_expr(expr, "z")),
        "Ldt": compile_expr(diff_expr(ld, "t")),
        "Ldx": compile_expr(diff_expr(ld, "x1")),
        "Ldd": compile_expr(diff_expr(ld, "d1")),
        "Ldz": compile_expr(diff_expr(ld, "z")),
    }


def build_reduced_lagrangian(lag: LagrangianDef, spec: ExpansionSpec,
                             x_init: float = 0.0) -> ReducedLagrangian:
    """Substitute the truncated expansion into a one-component Lagrangian."""
    return ReducedLagrangian(lag, spec, float(x_init))


# --------------------------------------------------------------------------
# Shooting solver for the N = 1 reduced problem
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 100
    slope_range: tuple = (-10.0, 10.0)
    scan_points: int = 17
    coarse_points: int = 101


@dataclass
class ShootingResult:
    grid: Grid
    x: np.ndarray
    v: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    slope: float
    iterations: int
    bracket_history: tuple
    mismatch: float

    def trajectory_x(self) -> SampledFunction:
        """Solution component with its slope attached as a derivative row."""
        return SampledFunction(self.grid, self.x, (self.v,))


def _rhs(red: ReducedLagrangian, t: float, x: float, v: float, z: float) -> tuple:
    p = red.state_partials(t, x, v, z)
    zdot = p["value"]
    num = p["Lbar_x"] + p["Lbar_z"] * p["phi"] - p["phi_t"] - p["phi_x"] * v - p["phi_z"] * zdot
    return v, num / p["phi_v"], zdot


def _integrate(red: ReducedLagrangian, grid: Grid, slope: float, x_left: float,
               z_init: float) -> Optional[tuple]:
    """RK4 from the first node after a; None when the state leaves floats."""
    t = grid.nodes.tolist()
    n = grid.n_points
    h = grid.h
    x = np.empty(n)
    v = np.empty(n)
    z = np.empty(n)
    x[0], v[0], z[0] = x_left, slope, z_init
    # start one node in: linear slope extrapolation for x, Euler for z
    xk, vk = x_left + h * slope, slope
    try:
        zk = z_init + h * red.value(t[1], xk, (vk,), z_init)
    except (ArithmeticError, ValueError):
        return None
    x[1], v[1], z[1] = xk, vk, zk
    yk = (xk, vk, zk)
    try:
        for k in range(1, n - 1):
            tk = t[k]
            k1 = _rhs(red, tk, *yk)
            k2 = _rhs(red, tk + 0.5 * h,
                      yk[0] + 0.5 * h * k1[0], yk[1] + 0.5 * h * k1[1], yk[2] + 0.5 * h * k1[2])
            k3 = _rhs(red, tk + 0.5 * h,
                      yk[0] + 0.5 * h * k2[0], yk[1] + 0.5 * h * k2[1], yk[2] + 0.5 * h * k2[2])
            k4 = _rhs(red, tk + h,
                      yk[0] + h * k3[0], yk[1] + h * k3[1], yk[2] + h * k3[2])
            yk = tuple(
                yk[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                for i in range(3)
            )
            if not all(math.isfinite(c) for c in yk):
                return None
            x[k + 1], v[k + 1], z[k + 1] = yk
    except (ArithmeticError, ValueError):
        return None
    return x, v, z


def solve_reduced_herglotz(red: ReducedLagrangian, grid: Grid, x_left: float,
                           x_right: float, z_init: float,
                           settings: SolverSettings = SolverSettings()) -> ShootingResult:
    """Shoot on the initial slope until |x(b) - x_b| <= tol."""
    if red.spec.n_terms != 1:
        raise ValueError("the solver handles the N = 1 reduction only")
    history = []

    def mismatch(s: float, g: Grid) -> float:
        out = _integrate(red, g, s, x_left, z_init)
        m = math.nan if out is None else out[0][-1] - x_right
        history.append((s, m))
        return m

    # bracket scan on a coarse grid
    coarse = Grid(grid.a, grid.b, min(grid.n_points, settings.coarse_points))
    lo, hi = settings.slope_range
    slopes = np.linspace(lo, hi, settings.scan_points)
    values = [mismatch(float(s), coarse) for s in slopes]
    bracket = None
    for i in range(len(slopes) - 1):
        m0, m1 = values[i], values[i + 1]
        if math.isfinite(m0) and math.isfinite(m1) and m0 * m1 <= 0.0:
            bracket = (float(slopes[i]), float(slopes[i + 1]))
            break
    if bracket is None:
        raise NoBracketError(
            f"no sign change in the terminal mismatch over slopes [{lo}, {hi}]"
        )

    # secant polish on the requested grid, bisection fallback keeps progress
    s0, s1 = bracket
    m0 = mismatch(s0, grid)
    m1 = mismatch(s1, grid)
    iterations = 0
    s, m = (s1, m1) if abs(m1) < abs(m0) else (s0, m0)
    while abs(m) > settings.tol and iterations < settings.max_iter:
        iterations += 1
        if math.isfinite(m0) and math.isfinite(m1) and m1 != m0:
            cand = s1 - m1 * (s1 - s0) / (m1 - m0)
        else:
            cand = 0.5 * (s0 + s1)
        if not math.isfinite(cand) or not min(s0, s1) - 1.0 <= cand <= max(s0, s1) + 1.0:
            cand = 0.5 * (s0 + s1)
        mc = mismatch(cand, grid)
        s0, m0, s1, m1 = s1, m1, cand, mc
        s, m = cand, mc
        if not math.isfinite(m):
            raise StiffnessError("integration left the floating-point range")
    if abs(m) > settings.tol:
        raise StiffnessError(
            f"no convergence after {iterations} iterations; |mismatch|={abs(m):.3e}"
        )

    out = _integrate(red, grid, s, x_left, z_init)
    if out is None:
        raise StiffnessError("final integration left the floating-point range")
    x, v, z = out
    parts = red.grid_partials(grid.nodes, x, v, z)
    lbar_z = parts["Lbar_z"]
    lbar_z[0] = lbar_z[1]  # the base node is outside the reduced domain
    lam = np.exp(-cumulative_trapezoid(lbar_z, grid.h))
    lam[0] = 1.0
    return ShootingResult(
        grid=grid,
        x=x,
        v=v,
        z=z,
        lam=lam,
        slope=float(s),
        iterations=iterations,
        bracket_history=tuple(history),
        mismatch=float(m),
    )


def solve_problem(problem: HerglotzProblem,
                  settings: SolverSettings = SolverSettings()) -> ShootingResult:
    """Reduce a one-component fixed-endpoint problem (N = 1) and shoot."""
    if problem.dimension != 1:
        raise DimensionError("the reduction supports a single component only")
    if problem.bc_right[0] is None:
        raise ValueError("the shooting solver needs a fixed right boundary value")
    spec = ExpansionSpec(1, problem.grid.a, problem.lagrangian.orders[0])
    red = build_reduced_lagrangian(problem.lagrangian, spec, problem.bc_left[0])
    return solve_reduced_herglotz(
        red, problem.grid, problem.bc_left[0], problem.bc_right[0],
        problem.z_init, settings,
    )


def self_consistency_residual(red: ReducedLagrangian, result: ShootingResult,
                              left_margin: float = 0.01) -> float:
    """Pointwise defect of the reduced stationarity equation on the samples.

    The equation d/dt(lam * dLbar/dx') = lam * dLbar/dx is checked in its
    local integral form: Simpson over [t_{k-1}, t_{k+1}] against the
    difference of the integrated quantity, normalized by 2h.  This avoids
    amplifying rounding through high-order difference stencils.  Nodes with
    t < a + left_margin*(b-a) are excluded: the expansion weights are
    singular at a and the equation itself degenerates there.
    """
    grid = result.grid
    parts = red.grid_partials(grid.nodes, result.x, result.v, result.z)
    w = result.lam * parts["phi"]
    g = result.lam * parts["Lbar_x"]
    h = grid.h
    defect = (w[2:] - w[:-2] - (h / 3.0) * (g[:-2] + 4.0 * g[1:-1] + g[2:])) / (2.0 * h)
    t_mid = grid.nodes[1:-1]
    keep = t_mid >= grid.a + left_margin * (grid.b - grid.a)
    return float(np.max(np.abs(defect[keep])))


@dataclass
class ComparisonTable:
    """Numeric-vs-exact table with columns t, x_numeric, x_exact, abs_error."""

    grid: Grid
    x_numeric: np.ndarray
    x_exact: np.ndarray
    abs_error: np.ndarray
    linf: float
    l2: float

    def to_csv(self, path) -> None:
        lines = ["t,x_numeric,x_exact,abs_error"]
        for row in zip(self.grid.nodes, self.x_numeric, self.x_exact, self.abs_error):
            lines.append(",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")


def emit_comparison(result: ShootingResult, exact: SampledFunction) -> ComparisonTable:
    """Tabulate the solved trajectory against a reference on the same grid."""
    if exact.grid != result.grid:
        raise GridMismatchError("comparison needs the reference on the solver grid")
    err = np.abs(result.x - exact.values)
    return ComparisonTable(
        grid=result.grid,
        x_numeric=result.x.copy(),
        x_exact=exact.values.copy(),
        abs_error=err,
        linf=float(np.max(err)),
        l2=float(math.sqrt(result.grid.h * float(np.sum(err * err)))),
    )
