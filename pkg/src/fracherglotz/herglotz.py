"""Herglotz functional machinery: z-integration, the integrating factor,
stationarity and transversality residuals, and directional variations.

The functional is the terminal value z(b) of dz/dt = L(t, x, cD x, z) with
z(a) fixed, so "evaluating" the functional means integrating that ODE along
a candidate trajectory.  Stationarity is certified through residuals of

    lam(t) * dL/dx_j + D_b^{alpha_j} ( lam(t) * dL/dd_j ) = 0,

with lam(t) = exp(-int_a^t dL/dz); the right-sided operator is evaluated as
a finite difference of the right fractional integral, which loses order at
the outermost nodes, so norms exclude two nodes at each end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .exprlang import (
    Dual,
    EvalPoint,
    ExprDomainError,
    compile_expr,
    evaluate,
)
from .fracops import (
    DifferintegralOrder,
    FractionalOrder,
    MissingDerivativeError,
    OrderRangeError,
    UnsupportedOrderError,
    left_caputo_deriv,
    right_rl_differintegral,
    right_rl_integral,
)
from .problems import LagrangianDef, ProblemDefinition
from .sampling import Grid, SampledFunction, cumulative_trapezoid

__all__ = [
    "HerglotzProblem",
    "Trajectory",
    "ResidualReport",
    "VariationReport",
    "BoundaryViolationError",
    "NoFreeEndpointError",
    "solve_z",
    "compute_lambda",
    "el_residual",
    "higher_order_el_residual",
    "transversality_residual",
    "higher_order_transversality",
    "functional_value",
    "directional_derivative",
]

# nodes dropped at each end of residual norms; the FD-of-integral stencil
# for the right RL derivative is one-sided there and loses order
RESIDUAL_TRIM = 2

_BC_TOL = 1e-9


class BoundaryViolationError(ValueError):
    """Trajectory or variation direction violates the boundary data."""


class NoFreeEndpointError(ValueError):
    """Transversality requested but every right endpoint is fixed."""


@dataclass(frozen=True)
class HerglotzProblem:
    """A problem definition discretized on a concrete grid."""

    lagrangian: LagrangianDef
    grid: Grid
    z_init: float
    bc_left: tuple
    bc_right: tuple

    def __post_init__(self):
        n = self.lagrangian.dimension
        object.__setattr__(self, "bc_left", tuple(float(v) for v in self.bc_left))
        object.__setattr__(
            self,
            "bc_right",
            tuple(None if v is None else float(v) for v in self.bc_right),
        )
        if len(self.bc_left) != n or len(self.bc_right) != n:
            raise ValueError("boundary data must have one entry per component")

    @classmethod
    def from_definition(cls, definition: ProblemDefinition, n_points: int) -> "HerglotzProblem":
        return cls(
            definition.lagrangian,
            definition.grid(n_points),
            definition.z_init,
            definition.bc_left,
            definition.bc_right,
        )

    @property
    def dimension(self) -> int:
        return self.lagrangian.dimension

    @property
    def orders(self) -> tuple:
        return tuple(FractionalOrder(a) for a in self.lagrangian.orders)

    @property
    def free_components(self) -> tuple:
        return tuple(j for j, bc in enumerate(self.bc_right) if bc is None)


@dataclass
class Trajectory:
    """Candidate trajectory with its Caputo samples, z, and lam attached."""

    x: tuple
    dx: tuple
    z: SampledFunction
    lam: SampledFunction


@dataclass
class ResidualReport:
    """Per-component residual samples with trimmed-interior norms."""

    h: float
    trim: int
    samples: tuple
    linf: tuple
    l2: tuple
    transversality: tuple
    notes: tuple = ()
    context: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "h": self.h,
            "trim": self.trim,
            "components": [
                {"linf": li, "l2": l2, "transversality": tv}
                for li, l2, tv in zip(self.linf, self.l2, self.transversality)
            ],
        }
        if self.notes:
            out["notes"] = list(self.notes)
        if self.context:
            out["context"] = dict(self.context)
        return out


@dataclass
class VariationReport:
    """Rate of change of z along a direction, via both estimates."""

    theta: SampledFunction
    theta_b: float
    theta_b_fd: float


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _as_components(problem: HerglotzProblem, x) -> tuple:
    comps = (x,) if isinstance(x, SampledFunction) else tuple(x)
    if len(comps) != problem.dimension:
        raise ValueError(
            f"trajectory has {len(comps)} components, problem needs {problem.dimension}"
        )
    for comp in comps:
        if comp.grid != problem.grid:
            raise ValueError("trajectory components must live on the problem grid")
    return comps


def _check_admissible(problem: HerglotzProblem, comps: tuple) -> None:
    for j, comp in enumerate(comps):
        left = problem.bc_left[j]
        tol = _BC_TOL * max(1.0, abs(left))
        if abs(comp.values[0] - left) > tol:
            raise BoundaryViolationError(
                f"component {j + 1}: x(a)={comp.values[0]!r} but boundary requires {left!r}"
            )
        right = problem.bc_right[j]
        if right is not None:
            tol = _BC_TOL * max(1.0, abs(right))
            if abs(comp.values[-1] - right) > tol:
                raise BoundaryViolationError(
                    f"component {j + 1}: x(b)={comp.values[-1]!r} but boundary requires {right!r}"
                )


def _caputo_component(comp: SampledFunction, order: FractionalOrder) -> np.ndarray:
    """Caputo samples for one component, routing on the order's ceiling."""
    a = order.alpha
    if 0.0 < a < 1.0:
        return left_caputo_deriv(comp, order).values
    if 1.0 < a < 2.0:
        if not comp.derivs:
            raise MissingDerivativeError(
                "orders in (1,2) need first-derivative samples attached"
            )
        inner = SampledFunction(comp.grid, comp.derivs[0], comp.derivs[1:2])
        return left_caputo_deriv(inner, a - 1.0).values
    raise OrderRangeError(f"unsupported Caputo order {a}")


def _trajectory_caputo(problem: HerglotzProblem, comps: tuple) -> tuple:
    return tuple(
        _caputo_component(comp, order)
        for comp, order in zip(comps, problem.orders)
    )


def _domain_error_with_node(problem, t, xs, ds, z, exc):
    """Re-run the tree evaluator at a failing point to attribute the node."""
    try:
        evaluate(problem.lagrangian.expr, EvalPoint(t=t, x=xs, d=ds, z=z))
    except ExprDomainError as attributed:
        raise attributed from exc
    raise exc


def _grid_partials(lag: LagrangianDef, t_arr, x_arrs, d_arrs, z_arr) -> dict:
    """Value and gradient arrays of L along sampled arguments."""
    n = lag.dimension
    k = 2 * n + 1  # tangents: x_1..x_n, d_1..d_n, z

    def seeded(i, arr):
        return Dual(arr, tuple(1.0 if j == i else 0.0 for j in range(k)))

    xs = tuple(seeded(j, x_arrs[j]) for j in range(n))
    ds = tuple(seeded(n + j, d_arrs[j]) for j in range(n))
    z = seeded(2 * n, z_arr)
    out = compile_expr(lag.expr)(t_arr, xs, ds, z)
    shape = np.shape(t_arr)

    def full(v):
        return np.broadcast_to(np.asarray(v, dtype=float), shape).copy()

    if not isinstance(out, Dual):
        zero = np.zeros(shape)
        return {
            "value": full(out),
            "dx": tuple(zero.copy() for _ in range(n)),
            "dd": tuple(zero.copy() for _ in range(n)),
            "dz": zero,
        }
    return {
        "value": full(out.val),
        "dx": tuple(full(out.eps[j]) for j in range(n)),
        "dd": tuple(full(out.eps[n + j]) for j in range(n)),
        "dz": full(out.eps[2 * n]),
    }


def _lambda_values(lag: LagrangianDef, grid: Grid, x_arrs, d_arrs, z_arr) -> np.ndarray:
    z_dual = Dual(z_arr, (1.0,))
    out = compile_expr(lag.expr)(grid.nodes, x_arrs, d_arrs, z_dual)
    if isinstance(out, Dual):
        dLdz = np.broadcast_to(np.asarray(out.eps[0], dtype=float), (grid.n_points,))
    else:
        dLdz = np.zeros(grid.n_points)
    lam = np.exp(-cumulative_trapezoid(dLdz, grid.h))
    lam[0] = 1.0
    return lam


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def solve_z(problem: HerglotzProblem, x, *, check_boundary: bool = True) -> Trajectory:
    """Integrate dz/dt = L(t, x, cD x, z) along x and attach lam.

    Classical fourth-order one-step integration on the grid; the sampled
    non-z arguments enter the half steps through linear interpolation.
    """
    comps = _as_components(problem, x)
    if check_boundary:
        _check_admissible(problem, comps)
    grid = problem.grid
    n_pts = grid.n_points
    h = grid.h
    dx = _trajectory_caputo(problem, comps)

    t_nodes = grid.nodes.tolist()
    xs_node = list(zip(*(c.values.tolist() for c in comps)))
    ds_node = list(zip(*(d.tolist() for d in dx)))
    xs_half = list(
        zip(*(((c.values[1:] + c.values[:-1]) * 0.5).tolist() for c in comps))
    )
    ds_half = list(zip(*(((d[1:] + d[:-1]) * 0.5).tolist() for d in dx)))

    fn = compile_expr(problem.lagrangian.expr)
    z = np.empty(n_pts)
    z[0] = problem.z_init
    zk = problem.z_init
    try:
        for k in range(n_pts - 1):
            tk = t_nodes[k]
            tm = tk + 0.5 * h
            k1 = fn(tk, xs_node[k], ds_node[k], zk)
            k2 = fn(tm, xs_half[k], ds_half[k], zk + 0.5 * h * k1)
            k3 = fn(tm, xs_half[k], ds_half[k], zk + 0.5 * h * k2)
            k4 = fn(t_nodes[k + 1], xs_node[k + 1], ds_node[k + 1], zk + h * k3)
            zk = zk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            z[k + 1] = zk
    except (ExprDomainError, ZeroDivisionError, OverflowError) as exc:
        _domain_error_with_node(problem, t_nodes[k], xs_node[k], ds_node[k], zk, exc)

    lam = _lambda_values(
        problem.lagrangian, grid, tuple(c.values for c in comps), dx, z
    )
    return Trajectory(
        x=comps,
        dx=dx,
        z=SampledFunction(grid, z),
        lam=SampledFunction(grid, lam),
    )


def compute_lambda(problem: HerglotzProblem, trajectory: Trajectory) -> SampledFunction:
    """Integrating factor lam(t) = exp(-int_a^t dL/dz); lam(a) = 1 exactly."""
    lam = _lambda_values(
        problem.lagrangian,
        problem.grid,
        tuple(c.values for c in trajectory.x),
        trajectory.dx,
        trajectory.z.values,
    )
    return SampledFunction(problem.grid, lam)


def functional_value(problem: HerglotzProblem, x) -> float:
    """Terminal value z(b) of the Herglotz ODE along x."""
    return float(solve_z(problem, x).z.values[-1])


def _norms(samples: np.ndarray, h: float, trim: int) -> tuple:
    interior = samples[trim : samples.size - trim]
    linf = float(np.max(np.abs(interior)))
    l2 = float(math.sqrt(h * float(np.sum(interior * interior))))
    return linf, l2


def _transversality_value(problem, trajectory, j, w: SampledFunction) -> float:
    # The discrete right integral vanishes identically at t = b for bounded
    # samples, so the condition is read off at the edge of the trusted
    # range, t = b - trim*h.
    alpha = problem.orders[j].alpha
    integ = right_rl_integral(w, 1.0 - alpha)
    return float(integ.values[-(RESIDUAL_TRIM + 1)])


def _el_core(problem: HerglotzProblem, trajectory: Trajectory, *, max_ceiling: int,
             notes: tuple = ()) -> ResidualReport:
    grid = problem.grid
    parts = _grid_partials(
        problem.lagrangian,
        grid.nodes,
        tuple(c.values for c in trajectory.x),
        trajectory.dx,
        trajectory.z.values,
    )
    lam = trajectory.lam.values
    samples = []
    linf = []
    l2 = []
    trans = []
    for j, order in enumerate(problem.orders):
        if order.n > max_ceiling:
            raise UnsupportedOrderError(
                f"component {j + 1}: order {order.alpha} exceeds the supported range"
            )
        w = SampledFunction(grid, lam * parts["dd"][j])
        rl = right_rl_differintegral(w, DifferintegralOrder(order.alpha))
        r = lam * parts["dx"][j] + rl.values
        samples.append(r)
        li, l2j = _norms(r, grid.h, RESIDUAL_TRIM)
        linf.append(li)
        l2.append(l2j)
        if problem.bc_right[j] is None and 0.0 < order.alpha < 1.0:
            trans.append(_transversality_value(problem, trajectory, j, w))
        else:
            trans.append(None)
    return ResidualReport(
        h=grid.h,
        trim=RESIDUAL_TRIM,
        samples=tuple(samples),
        linf=tuple(linf),
        l2=tuple(l2),
        transversality=tuple(trans),
        notes=notes,
    )


def el_residual(problem: HerglotzProblem, trajectory: Trajectory) -> ResidualReport:
    """Stationarity residual lam*dL/dx_j + D_b^a(lam*dL/dd_j), orders in (0,1)."""
    for j, order in enumerate(problem.orders):
        if not 0.0 < order.alpha < 1.0:
            raise OrderRangeError(
                f"component {j + 1}: el_residual needs alpha in (0,1); "
                "use higher_order_el_residual"
            )
    return _el_core(problem, trajectory, max_ceiling=1)


def higher_order_el_residual(problem: HerglotzProblem, trajectory: Trajectory) -> ResidualReport:
    """Same residual with per-component orders in (i-1, i), i <= 2."""
    return _el_core(problem, trajectory, max_ceiling=2)


def transversality_residual(problem: HerglotzProblem, trajectory: Trajectory) -> tuple:
    """Natural-boundary values I_b^{1-a}(lam*dL/dd_j) for free components."""
    free = problem.free_components
    if not free:
        raise NoFreeEndpointError("every right endpoint is fixed")
    parts = _grid_partials(
        problem.lagrangian,
        problem.grid.nodes,
        tuple(c.values for c in trajectory.x),
        trajectory.dx,
        trajectory.z.values,
    )
    lam = trajectory.lam.values
    out = []
    for j in free:
        w = SampledFunction(problem.grid, lam * parts["dd"][j])
        out.append(_transversality_value(problem, trajectory, j, w))
    return tuple(out)


def higher_order_transversality(problem: HerglotzProblem, trajectory: Trajectory) -> tuple:
    """Rows D_b^{a_i + j - i}(lam*dL/dd_i) at the right edge, j = 0..i-1.

    The underlying theorem is stated without proof in its source; reports
    carry a note flagging that.
    """
    free = problem.free_components
    if not free:
        raise NoFreeEndpointError("every right endpoint is fixed")
    parts = _grid_partials(
        problem.lagrangian,
        problem.grid.nodes,
        tuple(c.values for c in trajectory.x),
        trajectory.dx,
        trajectory.z.values,
    )
    lam = trajectory.lam.values
    rows = []
    for j in free:
        order = problem.orders[j]
        if order.n > 2:
            raise UnsupportedOrderError("only orders below 2 are supported")
        w = SampledFunction(problem.grid, lam * parts["dd"][j])
        row = []
        for k in range(order.n):
            beta = order.alpha + k - order.n
            op = right_rl_differintegral(w, DifferintegralOrder(beta))
            row.append(float(op.values[-(RESIDUAL_TRIM + 1)]))
        rows.append(tuple(row))
    return tuple(rows)


def directional_derivative(problem: HerglotzProblem, x, eta) -> VariationReport:
    """Rate of change theta of the functional along an admissible direction.

    theta(b) is computed two ways: a central difference of the functional
    and the closed-form weighted integral; reports carry both so callers
    can assert their agreement.
    """
    comps = _as_components(problem, x)
    etas = _as_components(problem, eta)
    for j, e in enumerate(etas):
        if abs(e.values[0]) > _BC_TOL:
            raise BoundaryViolationError(
                f"direction component {j + 1} must vanish at t = a"
            )
        if problem.bc_right[j] is not None and abs(e.values[-1]) > _BC_TOL:
            raise BoundaryViolationError(
                f"direction component {j + 1} must vanish at the fixed endpoint t = b"
            )

    base = solve_z(problem, comps)
    scale = max(1.0, max(float(np.max(np.abs(c.values))) for c in comps))
    eps = 1e-5 * scale

    def shifted(sign):
        moved = tuple(
            SampledFunction(c.grid, c.values + sign * eps * e.values)
            for c, e in zip(comps, etas)
        )
        return solve_z(problem, moved, check_boundary=False).z.values[-1]

    theta_b_fd = (shifted(+1.0) - shifted(-1.0)) / (2.0 * eps)

    parts = _grid_partials(
        problem.lagrangian,
        problem.grid.nodes,
        tuple(c.values for c in comps),
        base.dx,
        base.z.values,
    )
    lam = base.lam.values
    integrand = np.zeros(problem.grid.n_points)
    for j, order in enumerate(problem.orders):
        cd_eta = _caputo_component(etas[j], order)
        integrand += lam * (
            parts["dx"][j] * etas[j].values + parts["dd"][j] * cd_eta
        )
    theta = cumulative_trapezoid(integrand, problem.grid.h) / lam
    return VariationReport(
        theta=SampledFunction(problem.grid, theta),
        theta_b=float(theta[-1]),
        theta_b_fd=float(theta_b_fd),
    )
