"""Command actions: each builds the domain objects for one CLI subcommand and runs it."""

from __future__ import annotations

from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence

import numpy as np

from .bubble import DEFAULT_CUTOFF, BubbleParams, dimension_constants
from .config import load_chart, load_function
from .corrector import solve_corrector
from .criterion import (
    check_conditions,
    classify_Z_case,
    default_points,
    eps_ladder,
    gap_scan,
    green_setup,
)
from .energy import (
    BoundaryFunction,
    assemble_phi1,
    assemble_phi2,
    cutoff_bubble,
    evaluate_report,
)
from .exceptions import ValidationError
from .geometry import MetricChart, build_chart, curvature_data, determinant_order
from .green import deviation_profile, flux_sweep, pole_norm_check, solve_green
from .grid import HalfBallGrid
from .models import RunConfig
from .runner import Action, CommandOutcome, FieldDump, RunContext
from .selftest import run_selftest
from .solver import (
    BallGrid,
    SolverProblem,
    continuation_to_critical,
    default_exponent,
    observed_order,
    solve_subcritical,
    verify_conformal_law,
)

SOLVER_DOMAINS = {"ball": "unit_ball_axisymmetric", "half-ball": "half_ball_chart"}


def parse_floats(text: str, where: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValidationError(where, f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ValidationError(where, "empty list")
    return values


def delta_ladder(spec: str) -> List[float]:
    """``d0,k``: d0 halved k-1 times."""
    values = parse_floats(spec, "cli.flux")
    if len(values) != 2 or values[0] <= 0.0 or values[1] < 1 or values[1] != int(values[1]):
        raise ValidationError("cli.flux", "--delta-sweep takes d0,k with d0 > 0 and k >= 1")
    return [values[0] / 2.0**j for j in range(int(values[1]))]


def eps_sweep(spec: str) -> List[float]:
    """``e0,k,count``: e0, e0/k, e0/k^2, ..."""
    values = parse_floats(spec, "cli.criterion")
    if len(values) != 3 or values[2] != int(values[2]):
        raise ValidationError("cli.criterion", "--eps-sweep takes e0,k,count")
    return eps_ladder(values[0], values[1], int(values[2]))


def _chart(path: Path) -> MetricChart:
    return build_chart(load_chart(path))


def _function(path: Path, n: int) -> BoundaryFunction:
    return BoundaryFunction.from_spec(load_function(path), n)


def constants(ctx: RunContext, n: int) -> CommandOutcome:
    data = dimension_constants(n)
    result = {**data.to_dict(), "C_eta": DEFAULT_CUTOFF.c_eta}
    rows = [{"n": n, "A": data.A, "B": data.B, "D": data.D, "Q_ball": data.Q_ball}]
    return CommandOutcome(result=result, rows=rows)


def chart_check(ctx: RunContext, chart_path: Path) -> CommandOutcome:
    chart = _chart(chart_path)
    data = curvature_data(chart)
    result: Dict[str, Any] = {
        "chart": chart.spec.to_dict(),
        "curvature": data.summary(),
        "R0": data.R_sampler(np.zeros(chart.n)),
        "determinant_order": determinant_order(chart),
    }
    if chart.n >= 6 and data.umbilic:
        result["z_case"] = classify_Z_case(chart, data)
    return CommandOutcome(result=result)


def corrector(
    ctx: RunContext, chart_path: Path, eps: float, delta: float, points: int, tol: float
) -> CommandOutcome:
    chart = _chart(chart_path)
    H = curvature_data(chart).H
    p = BubbleParams(chart.n, eps, delta)
    grid = HalfBallGrid(chart.n, 2.0 * delta, points, eps=eps)
    sol = solve_corrector(H, p, grid, tol=tol, stream=ctx.stream)
    components = [sol.V.values[..., i] for i in range(chart.n)] + [sol.psi.values]
    return CommandOutcome(
        result=sol.summary(),
        fields=[FieldDump("corrector", components, grid.central_spacing, grid.radius)],
    )


def green(
    ctx: RunContext, chart_path: Path, rho_out: float, points: int, tol: float
) -> CommandOutcome:
    chart = _chart(chart_path)
    grid = HalfBallGrid(chart.n, rho_out, points, eps=chart.support_radius / 6.0)
    gd = solve_green(chart, grid, rho_out, tol=tol, stream=ctx.stream)
    inner = gd.exclusion_radius
    radii = [r for r in np.geomspace(2.0 * inner, 0.5 * rho_out, 5) if inner < r < rho_out]
    result = {
        **gd.summary(),
        "pole_profile": pole_norm_check(gd),
        "deviation": deviation_profile(gd, radii) if len(radii) >= 2 else None,
    }
    return CommandOutcome(
        result=result,
        fields=[FieldDump("green_w", [gd.w.values], grid.central_spacing, grid.radius)],
    )


def flux(
    ctx: RunContext,
    chart_path: Path,
    deltas: Sequence[float],
    points: int | None,
    tol: float,
) -> CommandOutcome:
    chart = _chart(chart_path)
    grid, rho_out = green_setup(chart, max(deltas), points or default_points(chart.n))
    gd = solve_green(chart, grid, rho_out, tol=tol, stream=ctx.stream)
    sweep = flux_sweep(gd, chart, deltas)
    rows = [{"delta": d, "value": v} for d, v in zip(sweep["deltas"], sweep["values"])]
    result = {
        "flux": {f"{d:.6g}": v for d, v in zip(sweep["deltas"], sweep["values"])},
        "sweep": sweep,
        "green": gd.summary(),
    }
    return CommandOutcome(result=result, rows=rows)


def energy(
    ctx: RunContext,
    chart_path: Path,
    f_path: Path,
    eps: float,
    delta: float,
    testfn: str,
    points: int | None,
    tol: float,
) -> CommandOutcome:
    chart = _chart(chart_path)
    f = _function(f_path, chart.n)
    n = chart.n
    p = BubbleParams(n, eps, delta)
    grid_points = points or default_points(n)
    if testfn not in ("phi1", "phi2"):
        raise ValidationError("cli.energy", "--testfn must be phi1 or phi2")
    if chart.is_flat and testfn == "phi1":
        phi = cutoff_bubble(p)
    else:
        grid = HalfBallGrid(n, 2.0 * delta, grid_points, eps=eps)
        sol = solve_corrector(curvature_data(chart).H, p, grid, tol=tol, stream=ctx.stream)
        if testfn == "phi2":
            green_grid, rho_out = green_setup(chart, delta, grid_points)
            gd = solve_green(chart, green_grid, rho_out, tol=tol, stream=ctx.stream)
            phi = assemble_phi2(p, sol, gd)
        else:
            phi = assemble_phi1(p, sol)
    report = evaluate_report(chart, phi, f)
    result = {**report.to_dict(), "conditions": check_conditions(chart, f).to_dict()}
    return CommandOutcome(result=result)


def criterion(
    ctx: RunContext,
    chart_path: Path,
    f_path: Path,
    delta: float,
    eps_values: Sequence[float],
    testfn: str,
    points: int | None,
    tol: float,
    c_n: float | None,
) -> CommandOutcome:
    chart = _chart(chart_path)
    f = _function(f_path, chart.n)
    report = gap_scan(
        chart,
        f,
        delta,
        eps_values,
        testfn=testfn,
        points=points,
        threads=ctx.threads,
        tol=tol,
        c_n=c_n,
        stream=ctx.stream,
    )
    rows = [
        {"eps": row["eps"], "E": row["E"], "norm_f": row["norm_f"], "gap": row["gap"]}
        for row in report.sweep
    ]
    fields = []
    if report.u is not None:
        u = report.u
        fields.append(FieldDump("witness_u", [u.values], u.grid.central_spacing, u.grid.radius))
    return CommandOutcome(result=report.to_dict(), rows=rows, fields=fields)


def _solver_grid(domain: str, n: int, shape: Sequence[float]) -> BallGrid | HalfBallGrid:
    if domain == "half-ball":
        if len(shape) != 2:
            raise ValidationError("cli.solve", "--grid takes POINTS,RADIUS on the half-ball")
        return HalfBallGrid(n, float(shape[1]), int(shape[0]))
    if len(shape) != 2:
        raise ValidationError("cli.solve", "--grid takes R,T")
    return BallGrid(n, int(shape[0]), int(shape[1]))


def solve(
    ctx: RunContext,
    domain: str,
    n: int,
    f_path: Path,
    p_exp: float | None,
    shape: Sequence[float],
    tol: float,
    max_iter: int,
    ladder: Sequence[float] | None,
    refine: bool,
    chart_path: Path | None = None,
) -> CommandOutcome:
    if domain not in SOLVER_DOMAINS:
        raise ValidationError("cli.solve", f"--domain must be one of {', '.join(SOLVER_DOMAINS)}")
    chart = None
    if domain == "half-ball":
        if chart_path is None:
            raise ValidationError("cli.solve", "--domain half-ball needs --chart")
        chart = _chart(chart_path)
        n = chart.n
    grid = _solver_grid(domain, n, shape)
    f = _function(f_path, n)
    problem = SolverProblem(
        SOLVER_DOMAINS[domain],
        n,
        f,
        default_exponent(n) if p_exp is None else p_exp,
        grid,
        chart=chart,
    )
    result: Dict[str, Any] = {}
    if ladder:
        states, summary = continuation_to_critical(
            problem, ladder, tol=tol, max_iter=max_iter, stream=ctx.stream
        )
        state = states[-1]
        result["continuation"] = summary
    else:
        state = solve_subcritical(problem, tol=tol, max_iter=max_iter, stream=ctx.stream)
    verification = verify_conformal_law(state)
    if refine:
        fine_problem = state.problem.refined()
        fine = verify_conformal_law(solve_subcritical(fine_problem, tol=tol, max_iter=max_iter))
        verification["refined"] = fine
        # an exact discrete solution (f = 1 gives u = const) has no measurable defect
        resolved = verification["law_defect"] > 0.0 and fine["law_defect"] > 0.0
        verification["observed_order"] = observed_order(verification, fine) if resolved else None
    result.update({"state": state.summary(), "verification": verification})
    if isinstance(grid, HalfBallGrid):
        values = state.u.reshape(grid.shape)
        dump = FieldDump("u", [values], grid.central_spacing, grid.radius)
    else:
        dump = FieldDump("u", [state.u], grid.dr, 1.0)
    return CommandOutcome(result=result, convergence=state.history, fields=[dump])


def selftest(ctx: RunContext, tier: str, only: Sequence[str] | None) -> CommandOutcome:
    report = run_selftest(tier=tier, threads=ctx.threads, only=only)
    rows = [
        {"criterion": row["criterion"], "tier": row["tier"], "passed": row["passed"]}
        for row in report["criteria"]
    ]
    return CommandOutcome(result=report, rows=rows, passed=bool(report["passed"]))


def _optional_int(value: Any) -> int | None:
    return None if value is None else int(value)


def _optional_float(value: Any) -> float | None:
    return None if value is None else float(value)


def _bind(command: str, q: Mapping[str, Any]) -> Action:
    """Parse the parameters of ``command`` eagerly and bind them to its action."""
    tol = float(q.get("tol", 1e-8))
    if command == "constants":
        return partial(constants, n=int(q["n"]))
    if command == "chart-check":
        return partial(chart_check, chart_path=Path(q["chart_path"]))
    if command == "corrector":
        return partial(
            corrector,
            chart_path=Path(q["chart_path"]),
            eps=float(q["eps"]),
            delta=float(q["delta"]),
            points=int(q.get("grid", 17)),
            tol=tol,
        )
    if command == "green":
        return partial(
            green,
            chart_path=Path(q["chart_path"]),
            rho_out=float(q["rho_out"]),
            points=int(q.get("grid", 17)),
            tol=tol,
        )
    if command == "flux":
        return partial(
            flux,
            chart_path=Path(q["chart_path"]),
            deltas=[float(d) for d in q["delta_sweep"]],
            points=_optional_int(q.get("grid")),
            tol=tol,
        )
    if command == "energy":
        return partial(
            energy,
            chart_path=Path(q["chart_path"]),
            f_path=Path(q["f_path"]),
            eps=float(q["eps"]),
            delta=float(q["delta"]),
            testfn=str(q.get("testfn", "phi1")),
            points=_optional_int(q.get("grid")),
            tol=tol,
        )
    if command == "criterion":
        return partial(
            criterion,
            chart_path=Path(q["chart_path"]),
            f_path=Path(q["f_path"]),
            delta=float(q["delta"]),
            eps_values=[float(e) for e in q["eps_sweep"]],
            testfn=str(q.get("testfn", "auto")),
            points=_optional_int(q.get("grid")),
            tol=tol,
            c_n=_optional_float(q.get("c_n")),
        )
    if command == "solve":
        return partial(
            solve,
            domain=str(q.get("domain", "ball")),
            n=int(q["n"]),
            f_path=Path(q["f_path"]),
            p_exp=_optional_float(q.get("p")),
            shape=[float(v) for v in q.get("grid_shape", (32, 16))],
            tol=tol,
            max_iter=int(q.get("max_iter", 500)),
            ladder=[float(v) for v in q["ladder"]] if q.get("ladder") else None,
            refine=bool(q.get("refine", False)),
            chart_path=Path(q["chart_path"]) if q.get("chart_path") else None,
        )
    if command == "selftest":
        only = q.get("only")
        return partial(
            selftest,
            tier=str(q.get("tier", "fast")),
            only=[str(key) for key in only] if only else None,
        )
    raise ValidationError(
        f"cli.{command}", f"unknown command; expected one of {', '.join(COMMANDS)}"
    )


COMMANDS = (
    "constants",
    "chart-check",
    "corrector",
    "green",
    "flux",
    "energy",
    "criterion",
    "solve",
    "selftest",
)


def build_action(config: RunConfig) -> Action:
    """Bind a run configuration (from the CLI or a YAML file) to its command."""
    where = f"cli.{config.command}"
    try:
        return _bind(config.command, config.parameters)
    except KeyError as exc:
        raise ValidationError(where, f"missing parameter {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ValidationError(where, f"malformed parameter: {exc}") from exc
