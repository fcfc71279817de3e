"""Command-line front end.

Commands: ops (fractional-operator utility), residual (stationarity /
transversality report), solve (expansion-reduced shooting solver),
noether (invariance, Noether residual, conserved quantity), and
list-problems.  Every command prints a compact JSON summary to stdout and
writes CSV/JSON files into --out according to --format; floats are
rendered with shortest-round-trip repr so reruns are byte-identical.

Exit codes: 0 success / within tolerance, 1 check failed, 2 usage or
config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import exprlang
from .exprlang import ArityError, ExprSyntaxError, UnknownIdentifierError
from .expansion import (
    NoBracketError,
    SolverSettings,
    StiffnessError,
    emit_comparison,
    self_consistency_residual,
    solve_problem,
)
from .fracops import (
    MissingDerivativeError,
    OrderRangeError,
    PoleError,
    UnsupportedOrderError,
    gamma,
    left_caputo_deriv,
    left_rl_integral,
    rgamma,
    right_caputo_deriv,
    right_rl_differintegral,
    right_rl_integral,
)
from .herglotz import (
    BoundaryViolationError,
    HerglotzProblem,
    NoFreeEndpointError,
    el_residual,
    higher_order_el_residual,
    solve_z,
)
from .noether import (
    SymmetryViolationError,
    TransformationFamily,
    constant_of_motion,
    invariance_check,
    noether_residual,
)
from .problems import (
    ConfigError,
    UnknownProblemError,
    builtin_problem,
    builtin_problem_names,
    load_problem_file,
    load_solver_options,
    make_trajectory,
)
from .sampling import Grid, GridMismatchError, SampledFunction

_USAGE_ERRORS = (
    ConfigError,
    UnknownProblemError,
    ExprSyntaxError,
    UnknownIdentifierError,
    ArityError,
    PoleError,
    OrderRangeError,
    UnsupportedOrderError,
    MissingDerivativeError,
    BoundaryViolationError,
    NoFreeEndpointError,
    GridMismatchError,
)
_CHECK_ERRORS = (SymmetryViolationError, NoBracketError, StiffnessError)


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _write_csv(path: Path, header, columns) -> None:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _parse_grid_arg(text: str, definition=None) -> Grid:
    """--grid accepts 'a:b:n', or a bare point count with a problem."""
    parts = text.split(":")
    if len(parts) == 1:
        if definition is None:
            raise ConfigError("--grid needs the a:b:n form for this command")
        return definition.grid(int(parts[0]))
    if len(parts) != 3:
        raise ConfigError(f"bad --grid {text!r}; use a:b:n or n")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    if definition is not None:
        if abs(a - definition.a) > 1e-12 or abs(b - definition.b) > 1e-12:
            raise ConfigError(
                f"--grid interval [{a}, {b}] does not match the problem's"
                f" [{definition.a}, {definition.b}]"
            )
    return Grid(a, b, n)


def _load_definition(args):
    if getattr(args, "config", None):
        if getattr(args, "problem", None):
            raise ConfigError("give either --problem or --config, not both")
        return load_problem_file(args.config)
    if not getattr(args, "problem", None):
        raise ConfigError("one problem source required: --problem or --config")
    params = {}
    if args.problem == "noether_gamma":
        if getattr(args, "gamma", None) is not None:
            params["gamma_coeff"] = args.gamma
        if getattr(args, "f_exponent", None) is not None:
            params["f_exponent"] = args.f_exponent
        if getattr(args, "alpha", None) is not None:
            params["alpha"] = args.alpha
    return builtin_problem(args.problem, **params)


def _load_trajectory(spec: str, grid: Grid) -> SampledFunction:
    if spec.endswith(".csv") or "/" in spec or "\\" in spec:
        path = Path(spec)
        if not path.exists():
            raise ConfigError(f"trajectory file not found: {path}")
        fn = SampledFunction.from_csv(path)
        if fn.grid != grid:
            raise ConfigError(
                f"trajectory grid {fn.grid} does not match the requested {grid}"
            )
        return fn
    return make_trajectory(spec).sample(grid)


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# ops
# --------------------------------------------------------------------------

_OPS = ("li", "ri", "lcd", "rcd", "rld")


def _ops_reference(op: str, spec, grid: Grid, order: float):
    """Closed-form power-rule reference samples, when available."""
    left_side = op in ("li", "lcd")
    terms = spec.left_power_terms(grid) if left_side else spec.right_power_terms(grid)
    if terms is None:
        return None
    t = grid.nodes
    base = (t - grid.a) if left_side else (grid.b - t)
    shift = {"li": -order, "ri": -order, "lcd": order, "rcd": order, "rld": order}[op]
    out = np.zeros(grid.n_points)
    for coef, p in terms:
        if shift > 0 and p == 0.0:
            continue  # derivative kills constants
        if shift > 0 and p < 1.0:
            return None  # outside the trusted closed-form range
        q = p - shift
        with np.errstate(divide="ignore"):
            powered = np.where(base > 0, base ** q, 0.0 if q > 0 else np.inf)
        if q == 0.0:
            powered = np.ones_like(base)
        out += coef * gamma(p + 1.0) * rgamma(p + 1.0 - shift) * powered
    return out


def _cmd_ops(args) -> int:
    grid = _parse_grid_arg(args.grid)
    spec = make_trajectory(args.fn)
    fn = spec.sample(grid)
    if args.op in ("li", "ri"):
        order = args.alpha if args.alpha is not None else 1.0
        result = (left_rl_integral if args.op == "li" else right_rl_integral)(fn, order)
    elif args.op in ("lcd", "rcd"):
        if args.alpha is None:
            raise ConfigError(f"--alpha required for {args.op}")
        order = args.alpha
        result = (left_caputo_deriv if args.op == "lcd" else right_caputo_deriv)(fn, order)
    else:
        if args.beta is None:
            raise ConfigError("--beta required for rld")
        order = args.beta
        result = right_rl_differintegral(fn, order)

    summary = {"op": args.op, "fn": args.fn, "order": order, "linf_vs_reference": None}
    ref = _ops_reference(args.op, spec, grid, order)
    if ref is not None and np.all(np.isfinite(ref)):
        sl = slice(2, grid.n_points - 2)
        summary["linf_vs_reference"] = float(
            np.max(np.abs(result.values[sl] - ref[sl]))
        )
    out = _out_dir(args)
    if args.format in ("csv", "both"):
        path = out / f"ops_{args.op}.csv"
        _write_csv(path, ["t", "value"], [grid.nodes, result.values])
        summary["csv"] = str(path)
    if args.format in ("json", "both"):
        path = out / f"ops_{args.op}.json"
        path.write_text(json.dumps(
            {"t": list(grid.nodes), "value": list(result.values)}, sort_keys=True
        ) + "\n")
        summary["json"] = str(path)
    _print_json(summary)
    return 0


# --------------------------------------------------------------------------
# residual
# --------------------------------------------------------------------------


def _cmd_residual(args) -> int:
    definition = _load_definition(args)
    grid = _parse_grid_arg(args.grid, definition)
    problem = HerglotzProblem(
        definition.lagrangian, grid, definition.z_init,
        definition.bc_left, definition.bc_right,
    )
    x = _load_trajectory(args.traj, grid)
    trajectory = solve_z(problem, x)
    higher = any(o.alpha > 1.0 for o in problem.orders)
    report = (higher_order_el_residual if higher else el_residual)(problem, trajectory)
    doc = report.to_json_dict()
    out = _out_dir(args)
    if args.format in ("json", "both"):
        path = out / "residual.json"
        path.write_text(json.dumps(doc, sort_keys=True) + "\n")
        doc["json"] = str(path)
    if args.format in ("csv", "both"):
        path = out / "residual_samples.csv"
        header = ["t"] + [f"r{j + 1}" for j in range(len(report.samples))]
        _write_csv(path, header, [grid.nodes, *report.samples])
        doc["csv"] = str(path)
    if args.plot:
        from .plotting import save_residual_figure

        fig_path = out / "residual.png"
        save_residual_figure(report, grid, fig_path)
        doc["figure"] = str(fig_path)
    _print_json(doc)
    if args.tol is not None and max(report.linf) > args.tol:
        return 1
    return 0


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------


def _cmd_solve(args) -> int:
    definition = _load_definition(args)
    if definition.lagrangian.dimension != 1:
        raise ConfigError("solve supports single-component problems")
    if definition.bc_right[0] is None:
        raise ConfigError("solve needs a fixed right boundary value")
    grid = _parse_grid_arg(args.grid, definition)
    problem = HerglotzProblem(
        definition.lagrangian, grid, definition.z_init,
        definition.bc_left, definition.bc_right,
    )
    opts = {}
    if args.config:
        opts = load_solver_options(args.config)
    if args.tol is not None:
        opts["tol"] = args.tol
    if args.max_iter is not None:
        opts["max_iter"] = args.max_iter
    if args.slope_range is not None:
        lo, hi = (float(v) for v in args.slope_range.split(","))
        opts["slope_range"] = (lo, hi)
    settings = SolverSettings(**opts)
    result = solve_problem(problem, settings)

    summary = {
        "slope": result.slope,
        "iterations": result.iterations,
        "mismatch": result.mismatch,
        "h": grid.h,
    }
    out = _out_dir(args)
    columns = [grid.nodes, result.x, result.v, result.z]
    header = ["t", "x_numeric", "v_numeric", "z"]
    table = None
    if args.exact:
        exact = _load_trajectory(args.exact, grid)
        table = emit_comparison(result, exact)
        summary["linf_vs_exact"] = table.linf
        summary["l2_vs_exact"] = table.l2
        columns = [grid.nodes, result.x, table.x_exact, table.abs_error]
        header = ["t", "x_numeric", "x_exact", "abs_error"]
    if args.format in ("csv", "both"):
        path = out / "comparison.csv"
        _write_csv(path, header, columns)
        summary["csv"] = str(path)
    if args.format in ("json", "both"):
        path = out / "solve_summary.json"
        path.write_text(json.dumps(summary, sort_keys=True) + "\n")
        summary["json"] = str(path)
    if args.plot and table is not None:
        from .plotting import save_comparison_figure

        fig_path = out / "comparison.png"
        save_comparison_figure(table, fig_path)
        summary["figure"] = str(fig_path)
    _print_json(summary)
    return 0


# --------------------------------------------------------------------------
# noether
# --------------------------------------------------------------------------


def _parse_family(text: str, dimension: int) -> TransformationFamily:
    if text.startswith("const:"):
        gen = exprlang.Num(float(text.split(":", 1)[1]))
    else:
        gen = exprlang.parse(text)
    return TransformationFamily((gen,) * dimension)


def _cmd_noether(args) -> int:
    definition = _load_definition(args)
    grid = _parse_grid_arg(args.grid, definition)
    problem = HerglotzProblem(
        definition.lagrangian, grid, definition.z_init,
        definition.bc_left, definition.bc_right,
    )
    family = _parse_family(args.xi, problem.dimension)
    if args.from_solve:
        result = solve_problem(problem)
        x = result.trajectory_x()
        trajectory = solve_z(problem, x, check_boundary=False)
    elif args.traj:
        trajectory = solve_z(problem, _load_trajectory(args.traj, grid))
    else:
        raise ConfigError("trajectory source required: --traj or --from-solve")

    inv = invariance_check(problem, trajectory, family)
    residual = noether_residual(problem, trajectory, family)
    doc = {
        "invariance": inv.to_json_dict(),
        "noether_residual": residual.to_json_dict(),
    }
    conserved = None
    if args.conserved:
        conserved = constant_of_motion(problem, trajectory, 0)
        doc["conserved"] = conserved.to_json_dict()
    out = _out_dir(args)
    if args.format in ("json", "both"):
        path = out / "noether.json"
        path.write_text(json.dumps(doc, sort_keys=True) + "\n")
        doc["json"] = str(path)
    if conserved is not None and args.format in ("csv", "both"):
        path = out / "conserved.csv"
        _write_csv(path, ["t", "C"], [grid.nodes, conserved.values.values])
        doc["csv"] = str(path)
    if args.plot and conserved is not None:
        from .plotting import save_conserved_figure

        fig_path = out / "conserved.png"
        save_conserved_figure(conserved, fig_path)
        doc["figure"] = str(fig_path)
    _print_json(doc)
    if args.tol is not None:
        flat = conserved.flatness if conserved is not None else max(residual.linf)
        if flat > args.tol:
            return 1
    return 0


def _cmd_list_problems(args) -> int:
    for name in builtin_problem_names():
        sys.stdout.write(name + "\n")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracherglotz",
        description="Fractional Herglotz variational problems: operators,"
                    " residual reports, the expansion-based solver, and"
                    " Noether-type conserved-quantity checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json", "both"), default="both")
    common.add_argument("--plot", action="store_true",
                        help="also render figures next to the delimited output")

    problem_src = argparse.ArgumentParser(add_help=False)
    problem_src.add_argument("--problem", help="built-in problem name")
    problem_src.add_argument("--config", help="problem config file path")
    problem_src.add_argument("--gamma", type=float, help="noether_gamma: damping coefficient")
    problem_src.add_argument("--f-exponent", type=float, dest="f_exponent",
                             help="noether_gamma: exponent of f")
    problem_src.add_argument("--alpha", type=float,
                             help="noether_gamma: fractional order")

    p_ops = sub.add_parser("ops", parents=[common],
                           help="apply a fractional operator to a closed-form function")
    p_ops.add_argument("--fn", required=True, help="pow:p | const:c | line:m:c")
    p_ops.add_argument("--op", required=True, choices=_OPS)
    p_ops.add_argument("--alpha", type=float, help="order for li/ri/lcd/rcd")
    p_ops.add_argument("--beta", type=float, help="signed order for rld")
    p_ops.add_argument("--grid", required=True, help="a:b:n")
    p_ops.set_defaults(func=_cmd_ops)

    p_res = sub.add_parser("residual", parents=[common, problem_src],
                           help="stationarity/transversality residual report")
    p_res.add_argument("--traj", required=True, help="pow:p | const:c | line:m:c | CSV path")
    p_res.add_argument("--grid", default="1001", help="n or a:b:n")
    p_res.add_argument("--tol", type=float, help="exit 1 when interior Linf exceeds this")
    p_res.set_defaults(func=_cmd_residual)

    p_solve = sub.add_parser("solve", parents=[common, problem_src],
                             help="solve the N=1 reduced problem by shooting")
    p_solve.add_argument("--grid", default="1001", help="n or a:b:n")
    p_solve.add_argument("--exact", help="attach an exact column: pow:p | const:c | line:m:c")
    p_solve.add_argument("--tol", type=float, help="shooting tolerance on |x(b)-x_b|")
    p_solve.add_argument("--max-iter", type=int, dest="max_iter")
    p_solve.add_argument("--slope-range", dest="slope_range", help="lo,hi scan range")
    p_solve.set_defaults(func=_cmd_solve)

    p_noe = sub.add_parser("noether", parents=[common, problem_src],
                           help="invariance, Noether residual, conserved quantity")
    p_noe.add_argument("--xi", required=True, help="const:c or an expression in t, x1..xn")
    p_noe.add_argument("--traj", help="trajectory spec or CSV path")
    p_noe.add_argument("--from-solve", action="store_true", dest="from_solve",
                       help="take the trajectory from the reduced solver")
    p_noe.add_argument("--conserved", action="store_true",
                       help="also compute the shift-symmetry conserved quantity")
    p_noe.add_argument("--grid", default="1001", help="n or a:b:n")
    p_noe.add_argument("--tol", type=float,
                       help="exit 1 when the checked quantity exceeds this")
    p_noe.set_defaults(func=_cmd_noether)

    p_list = sub.add_parser("list-problems", help="print the built-in problem names")
    p_list.set_defaults(func=_cmd_list_problems)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CHECK_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except _USAGE_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
