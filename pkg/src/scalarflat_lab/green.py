"""Neumann Green's function of the conformal Laplacian and the hemisphere flux integral."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .artifacts import LDJSONLogger
from .exceptions import InterpolationOutOfDomain, PoleUnresolved, ValidationError
from .geometry import MetricChart, metric_samples
from .grid import GridField, HalfBallGrid, HemisphereRule
from .linalg import iteration_cap, pcg, stiffness

logger = logging.getLogger(__name__)

TAU_POLE = 1e-2
POLE_CELLS = 3


def conformal_coefficient(n: int) -> float:
    return 4.0 * (n - 1) / (n - 2)


def fundamental(n: int, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """|x|^(2-n) and its gradient; callers keep points away from the origin."""
    pts = np.asarray(points, dtype=float)
    radius = np.linalg.norm(pts, axis=-1)
    value = radius ** (2 - n)
    gradient = ((2 - n) * radius ** (-n))[..., None] * pts
    return value, gradient


@dataclass(slots=True)
class GreenData:
    chart: MetricChart
    grid: HalfBallGrid
    rho_out: float
    w: GridField
    exclusion_radius: float
    pole_norm_check: Dict[str, Any]
    residual_norm: float
    iterations: int
    flux: Dict[float, float] = field(default_factory=dict)
    flux_limit_estimate: Tuple[float, float] | None = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    _value: RegularGridInterpolator | None = field(default=None, repr=False)
    _gradient: RegularGridInterpolator | None = field(default=None, repr=False)

    def _interpolators(self) -> Tuple[RegularGridInterpolator, RegularGridInterpolator]:
        if self._value is None or self._gradient is None:
            method = "cubic" if min(self.grid.shape) >= 4 else "linear"
            axes = tuple(self.grid.coords)
            gradient = self.w.gradient if self.w.gradient is not None else self.w.finite_gradient()
            self._value = RegularGridInterpolator(
                axes, self.w.values, method=method, bounds_error=False, fill_value=None
            )
            self._gradient = RegularGridInterpolator(
                axes, gradient, method=method, bounds_error=False, fill_value=None
            )
        return self._value, self._gradient

    def regular_part(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """w and grad w at arbitrary points; zero beyond the Dirichlet radius."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(pts[:, -1] < -1e-12):
            raise InterpolationOutOfDomain("green.regular_part", "points must satisfy x_n >= 0")
        value_i, gradient_i = self._interpolators()
        lower = np.array([axis[0] for axis in self.grid.coords])
        upper = np.array([axis[-1] for axis in self.grid.coords])
        clipped = np.clip(pts, lower, upper)
        value = np.asarray(value_i(clipped))
        gradient = np.asarray(gradient_i(clipped))
        outside = np.linalg.norm(pts, axis=-1) >= self.rho_out
        value[outside] = 0.0
        gradient[outside] = 0.0
        return value, gradient

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """G = |x|^(2-n) + w and its gradient."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        gamma, d_gamma = fundamental(self.grid.n, pts)
        w, dw = self.regular_part(pts)
        return gamma + w, d_gamma + dw

    def summary(self) -> Dict[str, Any]:
        limit = None
        if self.flux_limit_estimate is not None:
            value, uncertainty = self.flux_limit_estimate
            limit = {"value": value, "uncertainty": uncertainty}
        return {
            "grid": self.grid.describe(),
            "rho_out": self.rho_out,
            "exclusion_radius": self.exclusion_radius,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "pole_norm_check": self.pole_norm_check,
            "flux": {f"{delta:.6g}": value for delta, value in sorted(self.flux.items())},
            "flux_limit_estimate": limit,
            "truncation": "w = 0 for |x| >= rho_out; bias O(rho_out^(2-n)) is not corrected",
            **self.diagnostics,
        }


def solve_green(
    chart: MetricChart,
    grid: HalfBallGrid,
    rho_out: float,
    tol: float = 1e-8,
    max_iter: int | None = None,
    stream: LDJSONLogger | None = None,
) -> GreenData:
    """Regular part w of G = |x|^(2-n) + w with G_nu = 0 on x_n = 0 and w = 0 at rho_out."""
    where = "green.solve_green"
    n = chart.n
    if grid.n != n:
        raise ValidationError(where, "grid and chart dimensions differ")
    if rho_out > grid.radius * (1.0 + 1e-12):
        raise ValidationError(where, f"rho_out={rho_out:g} exceeds the grid radius {grid.radius:g}")
    if not chart.is_flat and chart.support_radius >= 0.5 * rho_out:
        raise ValidationError(
            where,
            f"chart support {chart.support_radius:g} must lie inside rho_out/2 = {0.5 * rho_out:g}",
        )
    exclusion = POLE_CELLS * grid.central_spacing
    if not chart.is_flat and exclusion >= 0.5 * chart.support_radius:
        raise PoleUnresolved(
            where,
            f"pole exclusion radius {exclusion:g} overlaps the perturbation support "
            f"{chart.support_radius:g}; refine the grid",
            {"exclusion_radius": exclusion, "support_radius": chart.support_radius},
        )

    c = conformal_coefficient(n)
    mesh = grid.mesh().reshape(-1, n)
    radius = np.linalg.norm(mesh, axis=-1)
    volume = grid.volume_weights().ravel()
    samples = metric_samples(chart, mesh)
    R = samples.R if samples.R is not None else np.zeros(radius.size)
    coefficients = c * (volume * samples.sqrt_det)[:, None, None] * samples.g_inv
    K, operators = stiffness(grid, coefficients, volume * samples.sqrt_det * R)

    away = radius > exclusion
    safe = np.where(away[:, None], mesh, 1.0)
    gamma, d_gamma = fundamental(n, safe)
    gamma = np.where(away, gamma, 0.0)
    d_gamma = np.where(away[:, None], d_gamma, 0.0)
    deviation = samples.sqrt_det[:, None, None] * samples.g_inv - np.eye(n)
    flux_density = c * volume[:, None] * np.einsum("mij,mj->mi", deviation, d_gamma)
    rhs = -(volume * samples.sqrt_det * R * gamma)
    for i in range(n):
        for D in operators[i]:
            rhs -= 0.5 * (D.T @ flux_density[:, i])

    free = np.flatnonzero(radius < rho_out * (1.0 - 1e-12))
    K_free = K[free][:, free]
    b = rhs[free]
    cap = iteration_cap(free.size) if max_iter is None else max_iter

    def record(iteration: int, residual: float) -> None:
        if stream is not None:
            stream.append({"solver": "green", "iteration": iteration, "residual": residual})

    result = pcg(
        lambda x: np.asarray(K_free @ x),
        b,
        K_free.diagonal(),
        tol=tol,
        max_iter=cap,
        where=where,
        callback=record,
    )
    w = np.zeros(radius.size)
    w[free] = result.x
    w = w.reshape(grid.shape)
    w_field = GridField(grid, w, "w")
    w_field.gradient = w_field.finite_gradient()

    gd = GreenData(
        chart=chart,
        grid=grid,
        rho_out=rho_out,
        w=w_field,
        exclusion_radius=exclusion,
        pole_norm_check={},
        residual_norm=result.residual,
        iterations=result.iterations,
    )
    gd.pole_norm_check = pole_norm_check(gd)
    if gd.pole_norm_check["deviation"][0] > TAU_POLE:
        raise PoleUnresolved(
            where,
            f"|x|^(n-2) G deviates from 1 by {gd.pole_norm_check['deviation'][0]:.3e} "
            "on the innermost shell",
            gd.pole_norm_check,
        )

    boundary_dw = w_field.gradient[..., 0, -1]
    boundary_radius = grid.norms()[..., 0]
    keep = (boundary_radius > exclusion) & (boundary_radius < rho_out)
    G_nodes = np.where(away, gamma + w.ravel(), np.inf).reshape(grid.shape)
    inside = (grid.norms() > exclusion) & (grid.norms() < rho_out)
    gd.diagnostics = {
        "max_abs_w": float(np.max(np.abs(w))),
        "neumann_defect": float(np.max(np.abs(boundary_dw[keep]))) if np.any(keep) else 0.0,
        "min_G": float(np.min(G_nodes[inside])) if np.any(inside) else float("inf"),
        "positive": bool(np.all(G_nodes[inside] > 0.0)),
    }
    logger.info(
        "%s: n=%d rho_out=%g iterations=%d max|w|=%.3e",
        where, n, rho_out, result.iterations, gd.diagnostics["max_abs_w"],
    )
    return gd


def pole_norm_check(gd: GreenData, shells: int = 4) -> Dict[str, Any]:
    """max | |x|^(n-2) G - 1 | on shrinking hemispheres just outside the pole exclusion."""
    n = gd.grid.n
    rule = HemisphereRule(n, 8, 3, 6)
    outer = min(0.5 * gd.rho_out, 2.0 ** shells * gd.exclusion_radius)
    radii = [outer / 2.0**k for k in range(shells) if outer / 2.0**k > gd.exclusion_radius]
    if not radii:
        radii = [0.5 * (gd.exclusion_radius + gd.rho_out)]
    radii.sort()
    deviations = []
    for r in radii:
        w, _ = gd.regular_part(r * rule.directions)
        deviations.append(float(np.max(np.abs(w))) * r ** (n - 2))
    return {"radii": radii, "deviation": deviations, "tau_pole": TAU_POLE}


def flux_terms(gd: GreenData, chart: MetricChart, delta: float) -> Tuple[float, float]:
    """The two hemisphere integrals of the flux at radius delta, Green part and metric part."""
    where = "green.flux_integral"
    if not (gd.exclusion_radius < delta < gd.rho_out):
        raise InterpolationOutOfDomain(
            where,
            f"delta={delta:g} outside ({gd.exclusion_radius:g}, {gd.rho_out:g})",
            {"delta": delta},
        )
    n = gd.grid.n
    c = conformal_coefficient(n)
    rule = HemisphereRule(n)
    points = delta * rule.directions
    weights = delta ** (n - 1) * rule.weights
    normal = rule.directions

    gamma, d_gamma = fundamental(n, points)
    w, dw = gd.regular_part(points)
    green_term = c * float(
        np.sum(weights * (gamma * np.einsum("mi,mi->m", dw, normal)
                          - w * np.einsum("mi,mi->m", d_gamma, normal)))
    )

    metric_term = 0.0
    if not chart.is_flat:
        h = chart.h(points)
        dh = chart.dh(points)
        div_h = np.einsum("mikk->mi", dh)
        h_x = np.einsum("mik,mk->mi", h, points)
        integrand = delta ** (2 - 2 * n) * (delta**2 * div_h - 2 * n * h_x)
        metric_term = float(np.sum(weights * np.einsum("mi,mi->m", integrand, normal)))
    return green_term, metric_term


def flux_integral(gd: GreenData, chart: MetricChart, delta: float) -> float:
    green_term, metric_term = flux_terms(gd, chart, delta)
    value = green_term - metric_term
    gd.flux[float(delta)] = value
    return value


def aitken_limit(values: Sequence[float]) -> Tuple[float, float]:
    """Aitken delta-squared limit of the last three values and an uncertainty."""
    x = [float(v) for v in values]
    if len(x) == 1:
        return x[0], float("inf")
    if len(x) == 2:
        return x[1], abs(x[1] - x[0])
    x0, x1, x2 = x[-3:]
    denominator = (x2 - x1) - (x1 - x0)
    if abs(denominator) <= 1e-14 * max(abs(x2), 1.0):
        return x2, abs(x2 - x1)
    limit = x2 - (x2 - x1) ** 2 / denominator
    return limit, max(abs(limit - x2), 1e-16)


def flux_sweep(gd: GreenData, chart: MetricChart, deltas: Sequence[float]) -> Dict[str, Any]:
    """Flux over a decreasing delta sweep with Cauchy increments and an extrapolated limit."""
    ordered = sorted((float(d) for d in deltas), reverse=True)
    values = [flux_integral(gd, chart, d) for d in ordered]
    increments = [abs(b - a) for a, b in zip(values, values[1:])]
    ratios = [
        b / a if a > 0.0 else 0.0 for a, b in zip(increments, increments[1:])
    ]
    limit, uncertainty = aitken_limit(values)
    gd.flux_limit_estimate = (limit, uncertainty)
    return {
        "deltas": ordered,
        "values": values,
        "increments": increments,
        "increment_ratios": ratios,
        "limit": limit,
        "uncertainty": uncertainty,
        "limit_sign": int(np.sign(limit)) if abs(limit) > uncertainty else 0,
    }


def deviation_profile(gd: GreenData, radii: Sequence[float]) -> Dict[str, Any]:
    """max |G - |x|^(2-n)| per shell, its log-log slope and the measured bound constant."""
    n = gd.grid.n
    rule = HemisphereRule(n, 8, 3, 6)
    H = gd.chart.H
    degree = H.d if H.coefficients else 0
    rows = []
    for r in sorted(float(v) for v in radii):
        if not (gd.exclusion_radius < r < gd.rho_out):
            raise InterpolationOutOfDomain(
                "green.deviation_profile", f"radius {r:g} outside the resolved annulus"
            )
        w, _ = gd.regular_part(r * rule.directions)
        deviation = float(np.max(np.abs(w)))
        reference = r ** (degree + 3 - n)
        for (i, k, alpha), value in H.coefficients.items():
            if sum(alpha) >= 2:
                reference += (1.0 if i == k else 2.0) * abs(value) * r ** (sum(alpha) + 2 - n)
        rows.append({"radius": r, "deviation": deviation, "ratio": deviation / reference})
    usable = [row for row in rows if row["deviation"] > 0.0]
    slope = None
    if len(usable) >= 2:
        fit = np.polyfit(
            np.log([row["radius"] for row in usable]),
            np.log([row["deviation"] for row in usable]),
            1,
        )
        slope = float(fit[0])
    return {
        "rows": rows,
        "slope": slope,
        "measured_C": max((row["ratio"] for row in rows), default=0.0),
    }


def rho_out_sensitivity(
    chart: MetricChart, points: int, rho_out: float, probe_radius: float, tol: float = 1e-8
) -> Dict[str, Any]:
    """Change of w on |x| <= probe_radius when rho_out doubles at fixed central spacing."""
    grading = chart.support_radius / 6.0
    base_grid = HalfBallGrid(chart.n, rho_out, points, eps=grading)
    wide_grid = HalfBallGrid(chart.n, 2.0 * rho_out, points + 4, eps=grading)
    base = solve_green(chart, base_grid, rho_out, tol=tol)
    wide = solve_green(chart, wide_grid, 2.0 * rho_out, tol=tol)
    rule = HemisphereRule(chart.n, 8, 3, 6)
    probes = np.concatenate(
        [r * rule.directions for r in np.linspace(base.exclusion_radius, probe_radius, 4)[1:]]
    )
    w_base, _ = base.regular_part(probes)
    w_wide, _ = wide.regular_part(probes)
    gamma, _ = fundamental(chart.n, probes)
    change = np.abs(w_base - w_wide) / gamma
    return {
        "rho_out": [rho_out, 2.0 * rho_out],
        "max_relative_change": float(np.max(change)),
        "scale": rho_out ** (2 - chart.n),
    }
