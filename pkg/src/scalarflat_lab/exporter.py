"""Export utilities."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

from .artifacts import RunPaths
from .exceptions import ValidationError
from .utils import read_json, to_jsonable

TABLE_KEYS = ("sweep", "table", "history", "rungs", "criteria")


def _fieldnames(rows: Sequence[Mapping[str, Any]]) -> List[str]:
    names: List[str] = []
    for row in rows:
        for key in row:
            if key not in names:
                names.append(str(key))
    return names


def _cell(value: Any) -> Any:
    return json.dumps(value, sort_keys=True) if isinstance(value, (list, dict)) else value


def write_table(
    rows: Iterable[Mapping[str, Any]],
    destination: Path,
    fieldnames: Sequence[str] | None = None,
) -> Path:
    """Plot-ready CSV; nested values are flattened to their JSON text."""
    materialized = [dict(to_jsonable(dict(row))) for row in rows]
    names = list(fieldnames) if fieldnames is not None else _fieldnames(materialized)
    destination.parent.mkdir(parents=True, exist_ok=True)
    with destination.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=names, extrasaction="ignore")
        writer.writeheader()
        for row in materialized:
            writer.writerow({key: _cell(value) for key, value in row.items()})
    return destination


def summary_table(summary: Mapping[str, Any]) -> List[Dict[str, Any]]:
    result = summary.get("result", {})
    for key in TABLE_KEYS:
        rows = result.get(key) if isinstance(result, Mapping) else None
        if isinstance(rows, list) and rows and isinstance(rows[0], Mapping):
            return [dict(row) for row in rows]
    return []


def export_csv(run_dir: Path, output_path: Path | None = None) -> Path:
    """Rewrite the sweep table of a finished run from its summary.json."""
    run_paths = RunPaths(run_id=run_dir.name, base_dir=run_dir.parent)
    if not run_paths.summary_path.exists():
        raise ValidationError("exporter.export_csv", f"summary not found in {run_dir}")
    rows = summary_table(read_json(run_paths.summary_path))
    if not rows:
        raise ValidationError("exporter.export_csv", f"run {run_dir.name} has no tabular result")
    return write_table(rows, output_path or run_paths.sweep_csv_path)
