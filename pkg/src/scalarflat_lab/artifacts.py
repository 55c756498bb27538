"""Artifact management: run directories, LDJSON streams and binary field dumps."""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Sequence

import numpy as np

from .exceptions import ValidationError
from .utils import dump_json, to_jsonable

FIELD_MAGIC = b"SFLD"
FIELD_VERSION = 1


def timestamp_now() -> str:
    return datetime.now(tz=timezone.utc).isoformat()


def sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", name.strip()).strip("-").lower()


@dataclass(slots=True)
class RunPaths:
    run_id: str
    base_dir: Path

    @property
    def run_dir(self) -> Path:
        return self.base_dir / self.run_id

    @property
    def summary_path(self) -> Path:
        return self.run_dir / "summary.json"

    @property
    def sweep_csv_path(self) -> Path:
        return self.run_dir / "sweep.csv"

    @property
    def convergence_path(self) -> Path:
        return self.run_dir / "convergence.ldjson"

    @property
    def convergence_csv_path(self) -> Path:
        return self.run_dir / "convergence.csv"

    @property
    def markdown_report_path(self) -> Path:
        return self.run_dir / "report.md"

    @property
    def html_report_path(self) -> Path:
        return self.run_dir / "report.html"

    def field_path(self, name: str) -> Path:
        return self.run_dir / f"{sanitize(name)}.field"


class LDJSONLogger:
    def __init__(self, path: Path) -> None:
        self._path = path
        self._path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: Dict[str, Any]) -> None:
        with self._path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(to_jsonable(record), sort_keys=True))
            handle.write("\n")


def write_summary(path: Path, payload: Dict[str, Any]) -> None:
    dump_json(payload, path)


def write_field(
    path: Path,
    components: Sequence[np.ndarray],
    spacing: float,
    radius: float,
) -> None:
    """Write a little-endian field dump.

    Layout: magic ``SFLD``, uint32 version, uint32 n, uint32 component count,
    n x uint32 dims, float64 spacing, float64 radius, then each component's values
    in row-major order as float64.
    """
    if not components:
        raise ValidationError("artifacts.write_field", "no components to write")
    shape = components[0].shape
    if any(component.shape != shape for component in components):
        raise ValidationError("artifacts.write_field", "components must share one shape")
    path.parent.mkdir(parents=True, exist_ok=True)
    header = FIELD_MAGIC + struct.pack(
        f"<III{len(shape)}I", FIELD_VERSION, len(shape), len(components), *shape
    )
    header += struct.pack("<dd", float(spacing), float(radius))
    with path.open("wb") as handle:
        handle.write(header)
        for component in components:
            handle.write(np.ascontiguousarray(component, dtype="<f8").tobytes(order="C"))


def read_field(path: Path) -> tuple[list[np.ndarray], float, float]:
    data = path.read_bytes()
    if data[:4] != FIELD_MAGIC:
        raise ValidationError(f"{path}", "not a field dump (bad magic)")
    version, ndim, count = struct.unpack_from("<III", data, 4)
    if version != FIELD_VERSION:
        raise ValidationError(f"{path}", f"unsupported field dump version {version}")
    offset = 16
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += 4 * ndim
    spacing, radius = struct.unpack_from("<dd", data, offset)
    offset += 16
    size = int(np.prod(shape))
    values = np.frombuffer(data, dtype="<f8", count=size * count, offset=offset)
    components = [values[i * size : (i + 1) * size].reshape(shape).copy() for i in range(count)]
    return components, spacing, radius
