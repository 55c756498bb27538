"""Configuration loaders for chart, boundary-function and run documents."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Dict, Sequence

from .exceptions import ValidationError
from .models import (
    FUNCTION_KINDS,
    MODEL_KINDS,
    BoundaryFunctionSpec,
    ChartSpec,
    CoefficientKey,
    RunConfig,
    parse_coefficient_key,
)
from .utils import load_yaml


def _require_keys(data: Dict[str, Any], keys: Sequence[str], context: str) -> None:
    for key in keys:
        if key not in data:
            raise ValidationError(context, f"missing required key '{key}'")


def _load_mapping(path: Path) -> Dict[str, Any]:
    try:
        payload = load_yaml(path)
    except OSError as exc:
        raise ValidationError(f"{path}", f"cannot read document ({exc})") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}", "expected mapping at root")
    return payload


def _as_float(value: Any, context: str, name: str) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(context, f"'{name}' must be a number, got {value!r}") from exc
    if not math.isfinite(result):
        raise ValidationError(context, f"'{name}' must be finite")
    return result


def parse_chart(payload: Dict[str, Any], context: str) -> ChartSpec:
    _require_keys(payload, ("n", "delta_max", "model_kind"), context)
    n = payload["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ValidationError(context, "'n' must be an integer")
    delta_max = _as_float(payload["delta_max"], context, "delta_max")
    kind = str(payload["model_kind"])
    if kind not in MODEL_KINDS:
        raise ValidationError(context, f"model_kind must be one of {', '.join(MODEL_KINDS)}")

    if kind == "non_umbilic_linear" and "T" in payload:
        T = payload["T"]
        if not isinstance(T, list):
            raise ValidationError(context, "'T' must be a nested list")
        spec = ChartSpec.linear(n, T, delta_max)
        spec.validate(context)
        return spec

    raw = payload.get("coefficients", {}) or {}
    if not isinstance(raw, dict):
        raise ValidationError(context, "'coefficients' must be a mapping")
    coefficients: Dict[CoefficientKey, float] = {}
    for key, value in raw.items():
        entry = parse_coefficient_key(str(key), n, context)
        number = _as_float(value, context, str(key))
        if entry in coefficients and coefficients[entry] != number:
            raise ValidationError(context, f"conflicting values for symmetric entry {key!r}")
        if number != 0.0:
            coefficients[entry] = number
    params = {k: v for k, v in payload.items() if k not in ("n", "delta_max", "model_kind")}
    spec = ChartSpec(n, delta_max, kind, coefficients, params)
    spec.validate(context)
    return spec


def load_chart(path: Path) -> ChartSpec:
    return parse_chart(_load_mapping(path), f"{path}")


def parse_function(payload: Dict[str, Any], context: str) -> BoundaryFunctionSpec:
    _require_keys(payload, ("kind",), context)
    kind = str(payload["kind"])
    if kind not in FUNCTION_KINDS:
        raise ValidationError(context, f"kind must be one of {', '.join(FUNCTION_KINDS)}")
    normalized = payload.get("normalized", True)
    if not isinstance(normalized, bool):
        raise ValidationError(context, "'normalized' must be a boolean")
    params = {k: v for k, v in payload.items() if k not in ("kind", "normalized")}
    if kind == "constant":
        params["value"] = _as_float(params.get("value", 1.0), context, "value")
    elif kind == "radial":
        coefficients = params.get("coefficients")
        if not isinstance(coefficients, list) or not coefficients:
            raise ValidationError(context, "radial 'coefficients' must be a non-empty list")
        params["coefficients"] = [_as_float(c, context, "coefficients") for c in coefficients]
    elif kind == "polynomial":
        coefficients = params.get("coefficients")
        if not isinstance(coefficients, dict) or not coefficients:
            raise ValidationError(context, "polynomial 'coefficients' must be a non-empty mapping")
        params["coefficients"] = {
            str(key): _as_float(value, context, str(key)) for key, value in coefficients.items()
        }
    else:
        params["mean"] = _as_float(params.get("mean"), context, "mean")
        params["amplitude"] = _as_float(params.get("amplitude"), context, "amplitude")
    spec = BoundaryFunctionSpec(kind, params, normalized)
    spec.validate(context)
    return spec


def load_function(path: Path) -> BoundaryFunctionSpec:
    return parse_function(_load_mapping(path), f"{path}")


def load_run_config(path: Path) -> RunConfig:
    payload = _load_mapping(path)
    _require_keys(payload, ("command",), f"{path}")
    parameters = payload.get("parameters", {})
    if not isinstance(parameters, dict):
        raise ValidationError(f"{path}", "'parameters' must be a mapping")
    threads = payload.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool):
        raise ValidationError(f"{path}", "'threads' must be an integer")
    config = RunConfig.from_dict(payload)
    config.validate()
    return config
