"""Typer CLI for scalarflat_lab."""

from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import typer

try:  # typer >= 0.23 vendors its own copy of click
    from typer._click import exceptions as click_exceptions
except ImportError:
    from click import exceptions as click_exceptions
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .artifacts import RunPaths
from .commands import build_action, delta_ladder, eps_sweep, parse_floats
from .config import load_run_config
from .exceptions import InvariantViolation, LabError, ValidationError
from .exporter import export_csv, summary_table
from .models import RunConfig
from .paths import charts_dir, functions_dir, runs_dir
from .reporting import render_reports
from .runner import Runner
from .utils import read_json

app = typer.Typer(
    help="Scalar-flat conformal metrics with prescribed boundary mean curvature.",
    no_args_is_help=True,
)

console = Console()

OutOption = typer.Option(None, "--out", help="Base directory for run artifacts")
ThreadsOption = typer.Option(1, "--threads", min=1, help="Worker threads for sweeps")
JsonOption = typer.Option(True, "--json/--no-json", help="Write summary.json and reports")
CsvOption = typer.Option(True, "--csv/--no-csv", help="Write CSV tables")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Debug logging")


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _resolve(path: Path | None) -> str | None:
    return None if path is None else str(path.resolve())


def _execute(
    command: str,
    parameters: Dict[str, Any],
    out: Path | None,
    threads: int,
    emit_json: bool,
    emit_csv: bool,
    verbose: bool,
) -> Dict[str, Any]:
    _configure_logging(verbose)
    config = RunConfig(
        command=command,
        parameters=parameters,
        threads=threads,
        out_dir=_resolve(out),
        emit_json=emit_json,
        emit_csv=emit_csv,
    )
    return _run(config)


def _run(config: RunConfig) -> Dict[str, Any]:
    summary = Runner().execute(config, build_action(config))
    _print_summary(summary)
    if summary["status"] != "PASS":
        raise InvariantViolation(f"cli.{config.command}", "one or more checks failed")
    return summary


def _print_summary(summary: Dict[str, Any]) -> None:
    result = summary.get("result", {})
    table = Table(title=f"{summary['command']} ({summary['run_id']})")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    for key, value in sorted(result.items()):
        if isinstance(value, float):
            table.add_row(key, f"{value:.10g}")
        elif isinstance(value, (int, str, bool)) or value is None:
            table.add_row(key, str(value))
    if table.row_count:
        console.print(table)
    rows = summary_table(summary)
    if rows:
        console.print(_rows_table(rows))
    artifacts = summary.get("artifacts", {})
    if artifacts:
        console.print("Artifacts: " + ", ".join(sorted(artifacts.values())))


def _rows_table(rows: Sequence[Dict[str, Any]]) -> Table:
    columns: List[str] = []
    for row in rows:
        for key, value in row.items():
            if key not in columns and not isinstance(value, (dict, list)):
                columns.append(key)
    table = Table()
    for column in columns:
        table.add_column(column, justify="right")
    for row in rows:
        cells = []
        for column in columns:
            value = row.get(column)
            cells.append(f"{value:.6g}" if isinstance(value, float) else str(value))
        table.add_row(*cells)
    return table


@app.command()
def constants(
    n: int = typer.Option(..., "--n", help="Dimension n >= 3"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Dimension constants A(n), B(n), D(n), Q_ball(n) with their closed-form oracle."""
    _execute("constants", {"n": n}, out, threads, emit_json, emit_csv, verbose)


@app.command("chart-check")
def chart_check(
    chart: Path = typer.Option(..., "--chart", help="Chart specification (JSON/YAML)"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Validate a chart: Taylor data, |pi|^2, umbilicity, R(0) and the Z polynomial."""
    parameters = {"chart_path": _resolve(chart)}
    _execute("chart-check", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command()
def corrector(
    chart: Path = typer.Option(..., "--chart"),
    eps: float = typer.Option(..., "--eps"),
    delta: float = typer.Option(..., "--delta"),
    grid: int = typer.Option(17, "--grid", help="Points per axis"),
    tol: float = typer.Option(1e-8, "--tol"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Solve for the corrector field V and dump V and psi."""
    parameters = {
        "chart_path": _resolve(chart),
        "eps": eps,
        "delta": delta,
        "grid": grid,
        "tol": tol,
    }
    _execute("corrector", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command()
def green(
    chart: Path = typer.Option(..., "--chart"),
    rho_out: float = typer.Option(..., "--rho-out"),
    grid: int = typer.Option(17, "--grid"),
    tol: float = typer.Option(1e-8, "--tol"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Solve for the regular part of the boundary Green function."""
    parameters = {"chart_path": _resolve(chart), "rho_out": rho_out, "grid": grid, "tol": tol}
    _execute("green", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command()
def flux(
    chart: Path = typer.Option(..., "--chart"),
    delta_sweep: str = typer.Option(..., "--delta-sweep", help="d0,k: d0 halved k-1 times"),
    grid: Optional[int] = typer.Option(None, "--grid"),
    tol: float = typer.Option(1e-8, "--tol"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Flux integral I(p, delta) over a delta sweep with its extrapolated limit."""
    parameters = {
        "chart_path": _resolve(chart),
        "delta_sweep": delta_ladder(delta_sweep),
        "grid": grid,
        "tol": tol,
    }
    _execute("flux", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command()
def energy(
    chart: Path = typer.Option(..., "--chart"),
    f: Path = typer.Option(..., "--f", help="Boundary function specification"),
    eps: float = typer.Option(..., "--eps"),
    delta: float = typer.Option(..., "--delta"),
    testfn: str = typer.Option("phi1", "--testfn", help="phi1 or phi2"),
    grid: Optional[int] = typer.Option(None, "--grid"),
    tol: float = typer.Option(1e-8, "--tol"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Energy, boundary norms and the gap of one test function."""
    parameters = {
        "chart_path": _resolve(chart),
        "f_path": _resolve(f),
        "eps": eps,
        "delta": delta,
        "testfn": testfn,
        "grid": grid,
        "tol": tol,
    }
    _execute("energy", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command()
def criterion(
    chart: Path = typer.Option(..., "--chart"),
    f: Path = typer.Option(..., "--f"),
    delta: float = typer.Option(..., "--delta"),
    eps_sweep_spec: str = typer.Option(..., "--eps-sweep", help="e0,k,count"),
    testfn: str = typer.Option("auto", "--testfn", help="auto, phi1 or phi2"),
    grid: Optional[int] = typer.Option(None, "--grid"),
    tol: float = typer.Option(1e-8, "--tol"),
    c_n: Optional[float] = typer.Option(
        None, "--c-n", help="Override the Laplacian-condition constant c(n)"
    ),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Gap sweep over eps with scaling fit, verdict and witness."""
    parameters = {
        "chart_path": _resolve(chart),
        "f_path": _resolve(f),
        "delta": delta,
        "eps_sweep": eps_sweep(eps_sweep_spec),
        "testfn": testfn,
        "grid": grid,
        "tol": tol,
        "c_n": c_n,
    }
    _execute("criterion", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command()
def solve(
    n: int = typer.Option(..., "--n"),
    f: Path = typer.Option(..., "--f"),
    domain: str = typer.Option("ball", "--domain", help="ball or half-ball"),
    chart: Optional[Path] = typer.Option(None, "--chart", help="Metric chart for half-ball"),
    p: Optional[float] = typer.Option(None, "--p", help="Exponent; default critical - 0.05"),
    grid: str = typer.Option(
        "32,16", "--grid", help="R,T cells on the ball; POINTS,RADIUS on the half-ball"
    ),
    tol: float = typer.Option(1e-8, "--tol"),
    max_iter: int = typer.Option(500, "--max-iter", min=1),
    ladder: Optional[str] = typer.Option(None, "--ladder", help="Continuation exponents"),
    refine: bool = typer.Option(False, "--refine", help="Also solve on a refined grid"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Constrained minimization of the conformal energy on the unit ball or a chart half-ball."""
    parameters = {
        "domain": domain,
        "n": n,
        "f_path": _resolve(f),
        "chart_path": _resolve(chart),
        "p": p,
        "grid_shape": parse_floats(grid, "cli.solve"),
        "tol": tol,
        "max_iter": max_iter,
        "ladder": parse_floats(ladder, "cli.solve") if ladder else None,
        "refine": refine,
    }
    _execute("solve", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command()
def selftest(
    tier: str = typer.Option("fast", "--tier", help="fast, medium or slow"),
    only: Optional[List[str]] = typer.Option(None, "--only", help="Run only these criteria"),
    out: Optional[Path] = OutOption,
    threads: int = ThreadsOption,
    emit_json: bool = JsonOption,
    emit_csv: bool = CsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Run the acceptance criteria of a tier and print a pass/fail table."""
    parameters = {"tier": tier, "only": sorted(only) if only else None}
    _execute("selftest", parameters, out, threads, emit_json, emit_csv, verbose)


@app.command("list-inputs")
def list_inputs() -> None:
    """List chart and boundary-function files under ./charts and ./functions."""
    table = Table(title="Available Inputs")
    table.add_column("Kind")
    table.add_column("File")
    for kind, directory in (("chart", charts_dir()), ("function", functions_dir())):
        for file in sorted(directory.glob("*")):
            if file.suffix in (".json", ".yaml", ".yml"):
                table.add_row(kind, file.name)
    if not table.row_count:
        console.print("No inputs found under ./charts or ./functions")
        return
    console.print(table)


@app.command()
def run(
    config: Path = typer.Option(..., "--config", help="Run configuration (YAML/JSON)"),
    verbose: bool = VerboseOption,
) -> None:
    """Execute a run configuration file."""
    _configure_logging(verbose)
    _run(load_run_config(config))


@app.command()
def report(
    run_id: str = typer.Option(..., "--run-id", help="Run identifier to regenerate report for"),
    out: Optional[Path] = OutOption,
) -> None:
    """Re-render report.md and report.html from a run's summary.json."""
    base = out or runs_dir()
    run_paths = RunPaths(run_id=run_id, base_dir=base)
    if not run_paths.summary_path.exists():
        raise ValidationError("cli.report", f"summary not found for run {run_id}")
    summary = read_json(run_paths.summary_path)
    render_reports(summary, summary_table(summary), run_paths)
    console.print(f"[green]Regenerated reports for {run_id}[/green]")


@app.command()
def export(
    run: str = typer.Option(..., "--run", help="Run identifier"),
    format: str = typer.Option("csv", "--format", help="Export format", case_sensitive=False),
    out: Optional[Path] = OutOption,
) -> None:
    """Rewrite the sweep table of a run as CSV."""
    if format.lower() != "csv":
        raise ValidationError("cli.export", "only csv export is supported")
    run_path = (out or runs_dir()) / run
    if not run_path.exists():
        raise ValidationError("cli.export", f"run directory {run_path} not found")
    destination = export_csv(run_path)
    console.print(f"[green]Exported CSV to {destination}[/green]")


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point: 0 success, 1 usage or input error, 2 invariant or numerical failure."""
    try:
        app(args=list(argv) if argv is not None else None, standalone_mode=False)
    except click_exceptions.Abort:
        console.print("[red]aborted[/red]")
        return 1
    except click_exceptions.ClickException as exc:
        exc.show()
        return 1
    except LabError as exc:
        console.print(f"[red]error:[/red] {exc}")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
