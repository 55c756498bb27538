"""Data models for chart, boundary-function and run configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

from .exceptions import ValidationError
from .utils import config_hash

MODEL_KINDS = ("flat", "non_umbilic_linear", "curvature_quadratic", "custom_polynomial")
FUNCTION_KINDS = ("constant", "radial", "polynomial", "cosine")

CoefficientKey = Tuple[int, int, Tuple[int, ...]]


def parse_coefficient_key(key: str, n: int, context: str) -> CoefficientKey:
    """Parse ``"i.k:a1a2...an"`` (1-based indices) into a 0-based ``(i, k, alpha)``."""
    try:
        pair, exponents = key.split(":")
        i_raw, k_raw = pair.split(".")
        i, k = int(i_raw) - 1, int(k_raw) - 1
        alpha = tuple(int(char) for char in exponents.strip())
    except ValueError as exc:
        raise ValidationError(context, f"malformed coefficient key {key!r}") from exc
    if len(alpha) != n:
        raise ValidationError(context, f"coefficient key {key!r} needs {n} exponent digits")
    if not (0 <= i < n and 0 <= k < n):
        raise ValidationError(context, f"coefficient key {key!r} has index outside 1..{n}")
    return (min(i, k), max(i, k), alpha)


def format_coefficient_key(entry: CoefficientKey) -> str:
    i, k, alpha = entry
    return f"{i + 1}.{k + 1}:{''.join(str(a) for a in alpha)}"


@dataclass(slots=True)
class ChartSpec:
    n: int
    delta_max: float
    model_kind: str
    coefficients: Dict[CoefficientKey, float] = field(default_factory=dict)
    model_params: Dict[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return (self.n - 2) // 2

    def validate(self, context: str = "geometry.ChartSpec") -> None:
        if self.n < 3:
            raise ValidationError(context, f"dimension n={self.n} must be >= 3")
        if not (math.isfinite(self.delta_max) and self.delta_max > 0):
            raise ValidationError(context, f"delta_max={self.delta_max} must be positive")
        if self.model_kind not in MODEL_KINDS:
            raise ValidationError(context, f"unknown model_kind {self.model_kind!r}")
        for (i, k, alpha), value in self.coefficients.items():
            if len(alpha) != self.n or not (0 <= i <= k < self.n):
                raise ValidationError(context, f"bad coefficient index {(i, k, alpha)}")
            if any(a < 0 for a in alpha) or sum(alpha) == 0:
                label = format_coefficient_key((i, k, alpha))
                raise ValidationError(context, f"coefficient {label} needs |alpha| >= 1")
            if not math.isfinite(value):
                raise ValidationError(
                    context, f"coefficient {format_coefficient_key((i, k, alpha))} is not finite"
                )
        degrees = {sum(alpha) for (_, _, alpha) in self.coefficients}
        if self.model_kind == "flat" and self.coefficients:
            raise ValidationError(context, "flat model takes no coefficients")
        if self.model_kind == "curvature_quadratic" and degrees - {2}:
            raise ValidationError(context, "curvature_quadratic coefficients must have |alpha| = 2")
        if self.model_kind == "non_umbilic_linear" and degrees - {1}:
            raise ValidationError(context, "non_umbilic_linear coefficients must have |alpha| = 1")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "delta_max": self.delta_max,
            "model_kind": self.model_kind,
            "coefficients": {
                format_coefficient_key(key): value
                for key, value in sorted(self.coefficients.items())
            },
        }

    @classmethod
    def linear(cls, n: int, T: Any, delta_max: float = 1.0) -> "ChartSpec":
        """Model ``h_ab = -2 x_n T_ab`` on the tangential block."""
        rows = [list(map(float, row)) for row in T]
        if len(rows) != n - 1 or any(len(row) != n - 1 for row in rows):
            raise ValidationError("geometry.ChartSpec", f"T must be {n - 1}x{n - 1}")
        normal = tuple(1 if axis == n - 1 else 0 for axis in range(n))
        coefficients: Dict[CoefficientKey, float] = {}
        for a in range(n - 1):
            for b in range(a, n - 1):
                if rows[a][b] != rows[b][a]:
                    raise ValidationError("geometry.ChartSpec", "T must be symmetric")
                if rows[a][b] != 0.0:
                    coefficients[(a, b, normal)] = -2.0 * rows[a][b]
        return cls(n, delta_max, "non_umbilic_linear", coefficients, {"T": rows})


@dataclass(slots=True)
class BoundaryFunctionSpec:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    normalized: bool = True

    def validate(self, context: str = "energy.BoundaryFunction") -> None:
        if self.kind not in FUNCTION_KINDS:
            raise ValidationError(context, f"unknown boundary function kind {self.kind!r}")
        required = {
            "constant": ("value",),
            "radial": ("coefficients",),
            "polynomial": ("coefficients",),
            "cosine": ("mean", "amplitude"),
        }[self.kind]
        for key in required:
            if key not in self.params:
                raise ValidationError(context, f"{self.kind} function missing '{key}'")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "normalized": self.normalized, **self.params}


_RANGES: Mapping[str, Tuple[float, float]] = {
    "n": (3, 8),
    "eps": (0.0, math.inf),
    "delta": (0.0, math.inf),
    "rho_out": (0.0, math.inf),
    "grid": (5, 129),
    "tol": (0.0, 1.0),
    "p": (1.0, 3.0),
}


@dataclass(slots=True)
class RunConfig:
    command: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    threads: int = 1
    out_dir: str | None = None
    emit_json: bool = True
    emit_csv: bool = True

    def validate(self) -> None:
        context = f"cli.{self.command}"
        if self.threads < 1:
            raise ValidationError(context, "--threads must be >= 1")
        for name, value in self.parameters.items():
            if name.endswith("_path") and value is not None and not Path(value).exists():
                raise ValidationError(context, f"{name} {value} does not exist")
            if name in _RANGES and value is not None:
                low, high = _RANGES[name]
                numeric = float(value)
                if not (low <= numeric <= high) or (low == 0.0 and numeric == 0.0):
                    raise ValidationError(context, f"{name}={value} outside ({low}, {high})")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "parameters": dict(sorted(self.parameters.items())),
            "threads": self.threads,
            "out_dir": self.out_dir,
            "emit_json": self.emit_json,
            "emit_csv": self.emit_csv,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "RunConfig":
        return cls(
            command=str(payload["command"]),
            parameters=dict(payload.get("parameters", {})),
            threads=int(payload.get("threads", 1)),
            out_dir=payload.get("out_dir"),
            emit_json=bool(payload.get("emit_json", True)),
            emit_csv=bool(payload.get("emit_csv", True)),
        )

    @property
    def hash(self) -> str:
        payload = self.to_dict()
        payload.pop("out_dir", None)
        return config_hash(payload)
