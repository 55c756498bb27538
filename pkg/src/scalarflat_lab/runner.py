"""Run execution: run directories, summaries, tables, field dumps and reports."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np

from .artifacts import LDJSONLogger, RunPaths, write_field, write_summary
from .exporter import write_table
from .models import RunConfig
from .paths import runs_dir

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class FieldDump:
    name: str
    components: List[np.ndarray]
    spacing: float
    radius: float


@dataclass(slots=True)
class CommandOutcome:
    result: Dict[str, Any]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    convergence: List[Dict[str, Any]] = field(default_factory=list)
    fields: List[FieldDump] = field(default_factory=list)
    passed: bool = True


@dataclass(slots=True)
class RunContext:
    threads: int
    paths: RunPaths
    stream: LDJSONLogger | None


Action = Callable[[RunContext], CommandOutcome]


def run_identifier(config: RunConfig) -> str:
    return f"{config.command}-{config.hash}"


class Runner:
    def __init__(self, runs_path: Path | None = None) -> None:
        self._runs_path = runs_path or runs_dir()

    def paths_for(self, config: RunConfig) -> RunPaths:
        base = Path(config.out_dir) if config.out_dir else self._runs_path
        return RunPaths(run_id=run_identifier(config), base_dir=base)

    def execute(self, config: RunConfig, action: Action) -> Dict[str, Any]:
        config.validate()
        run_paths = self.paths_for(config)
        run_paths.run_dir.mkdir(parents=True, exist_ok=True)
        if run_paths.convergence_path.exists():
            run_paths.convergence_path.unlink()
        context = RunContext(
            threads=config.threads,
            paths=run_paths,
            stream=LDJSONLogger(run_paths.convergence_path) if config.emit_csv else None,
        )
        logger.info("runner: %s -> %s", config.command, run_paths.run_dir)
        outcome = action(context)

        summary: Dict[str, Any] = {
            "run_id": run_paths.run_id,
            "command": config.command,
            "config": config.to_dict(),
            "config_hash": config.hash,
            "version": _tool_version(),
            "environment": _environment_block(),
            "status": "PASS" if outcome.passed else "FAIL",
            "result": outcome.result,
            "artifacts": {},
        }
        artifacts: Dict[str, str] = summary["artifacts"]
        for dump in outcome.fields:
            path = run_paths.field_path(dump.name)
            write_field(path, dump.components, dump.spacing, dump.radius)
            artifacts[dump.name] = path.name
        if config.emit_csv and outcome.rows:
            write_table(outcome.rows, run_paths.sweep_csv_path)
            artifacts["table"] = run_paths.sweep_csv_path.name
        if config.emit_csv and outcome.convergence:
            write_table(outcome.convergence, run_paths.convergence_csv_path)
            artifacts["convergence"] = run_paths.convergence_csv_path.name
        if config.emit_json:
            write_summary(run_paths.summary_path, summary)

            from .reporting import render_reports

            render_reports(summary, outcome.rows, run_paths)
        return summary


def _tool_version() -> str:
    from . import __version__

    return __version__


def _environment_block() -> Dict[str, Any]:
    import importlib
    import platform
    import sys

    versions = {
        "python": sys.version.split()[0],
        "platform": platform.system(),
    }
    for module_name in ("numpy", "scipy", "typer", "jinja2", "yaml"):
        try:
            module = importlib.import_module(module_name)
            versions[module_name] = getattr(module, "__version__", "unknown")
        except ModuleNotFoundError:
            continue
    versions["scalarflat_lab"] = _tool_version()
    return versions
