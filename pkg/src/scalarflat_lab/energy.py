"""Energy, boundary norms and test functions phi1/phi2 evaluated by polar quadrature."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .bubble import DEFAULT_CUTOFF, BubbleParams, bubble_eval, cutoff_eval, dimension_constants
from .corrector import CorrectorSolution, assemble_psi, psi_sampler
from .exceptions import (
    GridMismatch,
    HypothesisViolated,
    SupportClipped,
    ValidationError,
)
from .geometry import TAU_CHART, MetricChart, boundary_mean_curvature, metric_samples
from .green import GreenData, conformal_coefficient
from .grid import GridField, HalfBallGrid, PolarGrid, Sampler
from .linalg import fd_weights
from .models import BoundaryFunctionSpec
from .utils import make_rng

logger = logging.getLogger(__name__)

TAU_DECLARED = 1e-6
SUPPORT_TOLERANCE = 1e-12


def boundary_exponent(n: int) -> float:
    return 2.0 * (n - 1) / (n - 2)


def _parse_exponents(key: str, dims: int, where: str) -> Tuple[int, ...]:
    if len(key) != dims or not key.isdigit():
        raise ValidationError(where, f"exponent key {key!r} needs {dims} digits")
    return tuple(int(ch) for ch in key)


def _radial_terms(coefficients: Sequence[float], dims: int) -> Dict[Tuple[int, ...], float]:
    """Expand sum_j c_j |x'|^(2j) into monomials of the tangential coordinates."""
    terms: Dict[Tuple[int, ...], float] = {}
    for j, c in enumerate(coefficients):
        if c == 0.0:
            continue
        if j == 0:
            key = (0,) * dims
            terms[key] = terms.get(key, 0.0) + c
            continue
        for beta in _compositions(j, dims):
            weight = math.factorial(j) / math.prod(math.factorial(b) for b in beta)
            key = tuple(2 * b for b in beta)
            terms[key] = terms.get(key, 0.0) + c * weight
    return terms


def _compositions(total: int, parts: int) -> List[Tuple[int, ...]]:
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


@dataclass(slots=True)
class BoundaryFunction:
    """Prescribed boundary function f near the concentration point.

    Half-space kinds are polynomials in the tangential coordinates x'; the
    ``cosine`` kind lives on the unit ball and is sampled by polar angle.
    """

    spec: BoundaryFunctionSpec
    n: int
    terms: Dict[Tuple[int, ...], float] = field(default_factory=dict)

    @classmethod
    def from_spec(cls, spec: BoundaryFunctionSpec, n: int) -> "BoundaryFunction":
        where = "energy.BoundaryFunction"
        spec.validate(where)
        dims = n - 1
        terms: Dict[Tuple[int, ...], float] = {}
        if spec.kind == "constant":
            terms[(0,) * dims] = float(spec.params["value"])
        elif spec.kind == "radial":
            terms = _radial_terms([float(c) for c in spec.params["coefficients"]], dims)
        elif spec.kind == "polynomial":
            for key, value in spec.params["coefficients"].items():
                exponents = _parse_exponents(str(key), dims, where)
                terms[exponents] = terms.get(exponents, 0.0) + float(value)
        function = cls(spec, n, {key: value for key, value in terms.items() if value != 0.0})
        function.check(where)
        return function

    @property
    def is_ball_only(self) -> bool:
        return self.spec.kind == "cosine"

    def _require_half_space(self) -> None:
        if self.is_ball_only:
            raise ValidationError(
                "energy.BoundaryFunction", "cosine functions are defined on the unit ball only"
            )

    def sample(self, x_tangential: np.ndarray) -> np.ndarray:
        self._require_half_space()
        pts = np.asarray(x_tangential, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for exponents, value in self.terms.items():
            out += value * np.prod(pts ** np.asarray(exponents), axis=-1)
        return out

    def sample_polar(self, theta: np.ndarray) -> np.ndarray:
        """f on the unit sphere as a function of the polar angle from the north pole."""
        t = np.asarray(theta, dtype=float)
        if self.spec.kind == "cosine":
            return self.spec.params["mean"] + self.spec.params["amplitude"] * np.cos(t)
        if self.spec.kind == "constant":
            return np.full(t.shape, self.terms.get((0,) * (self.n - 1), 0.0))
        raise ValidationError(
            "energy.BoundaryFunction", f"{self.spec.kind} functions are not defined on the ball"
        )

    @property
    def value0(self) -> float:
        if self.spec.kind == "cosine":
            return float(self.spec.params["mean"] + self.spec.params["amplitude"])
        return self.terms.get((0,) * (self.n - 1), 0.0)

    def derivative_norm(self, k: int) -> float:
        """Frobenius norm of the k-th derivative tensor of f at the origin."""
        self._require_half_space()
        total = 0.0
        for exponents, value in self.terms.items():
            if sum(exponents) != k:
                continue
            alpha_factorial = math.prod(math.factorial(a) for a in exponents)
            ordered = math.factorial(k) / alpha_factorial
            total += ordered * (alpha_factorial * value) ** 2
        return math.sqrt(total)

    def gradient0(self) -> np.ndarray:
        self._require_half_space()
        out = np.zeros(self.n - 1)
        for axis in range(self.n - 1):
            key = tuple(1 if a == axis else 0 for a in range(self.n - 1))
            out[axis] = self.terms.get(key, 0.0)
        return out

    def hessian0(self) -> np.ndarray:
        self._require_half_space()
        dims = self.n - 1
        out = np.zeros((dims, dims))
        for a in range(dims):
            for b in range(dims):
                key = [0] * dims
                key[a] += 1
                key[b] += 1
                factor = 2.0 if a == b else 1.0
                out[a, b] = factor * self.terms.get(tuple(key), 0.0)
        return out

    def laplacian0(self) -> float:
        return float(np.trace(self.hessian0()))

    def probe_max(self, count: int = 512, seed: int = 11) -> float:
        if self.is_ball_only:
            theta = np.linspace(0.0, math.pi, count)
            return float(np.max(self.sample_polar(theta)))
        rng = make_rng(seed)
        directions = rng.normal(size=(count, self.n - 1))
        directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
        radii = rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / (self.n - 1))
        probes = np.concatenate([np.zeros((1, self.n - 1)), radii * directions])
        return float(np.max(self.sample(probes)))

    def check(self, where: str) -> None:
        """Declared derivative data against finite differences; normalization if requested."""
        if self.spec.normalized:
            if abs(self.value0 - 1.0) > TAU_CHART:
                raise ValidationError(where, f"normalized f needs f(0) = 1, got {self.value0:g}")
            if self.probe_max() > 1.0 + TAU_CHART:
                raise ValidationError(where, "normalized f exceeds 1 on the probe set")
        if self.is_ball_only:
            return
        step = 1e-3
        offsets = np.arange(-2, 3, dtype=float)
        w1 = fd_weights(offsets, 1)
        w2 = fd_weights(offsets, 2)
        dims = self.n - 1
        measured_grad = np.zeros(dims)
        measured_hess = np.zeros(dims)
        for axis in range(dims):
            shifts = np.zeros((offsets.size, dims))
            shifts[:, axis] = offsets * step
            values = self.sample(shifts)
            measured_grad[axis] = float(w1 @ values) / step
            measured_hess[axis] = float(w2 @ values) / step**2
        scale = max(1.0, max((abs(v) for v in self.terms.values()), default=0.0))
        mismatch = max(
            float(np.max(np.abs(measured_grad - self.gradient0()))),
            float(np.max(np.abs(measured_hess - np.diag(self.hessian0())))),
        )
        if mismatch > TAU_DECLARED * scale:
            raise ValidationError(
                where, f"declared derivatives disagree with samples ({mismatch:g})"
            )

    def scaled(self, factor: float) -> "BoundaryFunction":
        params = dict(self.spec.params)
        if self.spec.kind == "cosine":
            params["mean"] = factor * params["mean"]
            params["amplitude"] = factor * params["amplitude"]
        spec = BoundaryFunctionSpec(self.spec.kind, params, normalized=False)
        terms = {key: factor * value for key, value in self.terms.items()}
        return BoundaryFunction(spec, self.n, terms)

    def normalized(self) -> "BoundaryFunction":
        """Divide by the maximum so that max f = f(0) = 1."""
        peak = self.probe_max()
        if peak <= 0.0:
            raise ValidationError("energy.BoundaryFunction", "f is not somewhere positive")
        out = self.scaled(1.0 / peak)
        out.spec.normalized = True
        return out

    def ensure_normalized(self) -> "BoundaryFunction":
        """self when already normalized, otherwise f / max f."""
        return self if self.spec.normalized else self.normalized()


@dataclass(slots=True)
class EnergyReport:
    E: float
    boundary_norm_f: float
    boundary_norm_1: float
    Q_of_phi: float
    gap: float
    quadrature_error_estimate: float
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "E": self.E,
            "boundary_norm_f": self.boundary_norm_f,
            "boundary_norm_1": self.boundary_norm_1,
            "Q_of_phi": self.Q_of_phi,
            "gap": self.gap,
            "quadrature_error_estimate": self.quadrature_error_estimate,
            **self.details,
        }


def _sampling_grid(p: BubbleParams) -> HalfBallGrid:
    return HalfBallGrid(p.n, 2.0 * p.delta, 9)


def cutoff_bubble(p: BubbleParams, grid: HalfBallGrid | None = None) -> GridField:
    """eta_delta * v_eps, the test function of a chart with zero corrector."""
    target = _sampling_grid(p) if grid is None else grid

    def sample(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(points)
        eta, d_eta = cutoff_eval(DEFAULT_CUTOFF, p.delta, pts)
        v, dv = bubble_eval(p, pts)
        return eta * v, d_eta * v[:, None] + eta[:, None] * dv

    values, _ = sample(target.mesh().reshape(-1, p.n))
    return GridField(
        target,
        values.reshape(target.shape),
        "phi1",
        sampler=sample,
        compact=True,
        meta=_meta(p, "phi1", 5.0 * p.delta / 3.0),
    )


def _meta(p: BubbleParams, name: str, outer: float) -> Dict[str, Any]:
    return {"eps": p.eps, "delta": p.delta, "test_function": name, "outer": outer}


def assemble_phi1(p: BubbleParams, sol: CorrectorSolution) -> GridField:
    """phi1 = eta_delta (v_eps + psi), compactly supported in |x| < 5 delta / 3."""
    if sol.grid.n != p.n:
        raise GridMismatch("energy.assemble_phi1", "corrector and bubble dimensions differ")
    sample = _phi1_sampler(p, sol)
    values, _ = sample(sol.grid.mesh().reshape(-1, p.n))
    return GridField(
        sol.grid,
        values.reshape(sol.grid.shape),
        "phi1",
        sampler=sample,
        compact=True,
        meta=_meta(p, "phi1", 5.0 * p.delta / 3.0),
    )


def _phi1_sampler(p: BubbleParams, sol: CorrectorSolution) -> Sampler:
    assemble_psi(sol, p)
    psi_at = psi_sampler(sol, p)

    def sample(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(points)
        eta, d_eta = cutoff_eval(DEFAULT_CUTOFF, p.delta, pts)
        v, dv = bubble_eval(p, pts)
        psi, d_psi = psi_at(pts)
        core = v + psi
        return eta * core, d_eta * core[:, None] + eta[:, None] * (dv + d_psi)

    return sample


def assemble_phi2(p: BubbleParams, sol: CorrectorSolution, gd: GreenData) -> GridField:
    """phi2 = eta_delta (v_eps + psi) + (1 - eta_delta) eps^m G; not compactly supported."""
    where = "energy.assemble_phi2"
    if gd.grid.n != p.n or sol.grid.n != p.n:
        raise GridMismatch(where, "corrector, Green and bubble dimensions differ")
    if gd.rho_out < 2.0 * p.delta * (1.0 - 1e-12):
        raise GridMismatch(
            where, f"Green radius {gd.rho_out:g} does not cover 2*delta = {2 * p.delta:g}"
        )
    if gd.exclusion_radius >= 4.0 * p.delta / 3.0:
        raise GridMismatch(where, "Green pole exclusion reaches the cutoff band")
    inner = _phi1_sampler(p, sol)
    scale = p.eps**p.m

    def sample(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(points)
        eta, d_eta = cutoff_eval(DEFAULT_CUTOFF, p.delta, pts)
        local, d_local = inner(pts)
        far = eta < 1.0
        G = np.zeros(pts.shape[0])
        dG = np.zeros(pts.shape)
        if np.any(far):
            G[far], dG[far] = gd.evaluate(pts[far])
        tail = (1.0 - eta) * scale * G
        d_tail = (1.0 - eta)[:, None] * scale * dG - d_eta * (scale * G)[:, None]
        return local + tail, d_local + d_tail

    values, _ = sample(sol.grid.mesh().reshape(-1, p.n))
    values = values.reshape(sol.grid.shape)
    meta = _meta(p, "phi2", gd.rho_out)
    meta["green_truncation"] = gd.rho_out
    return GridField(sol.grid, values, "phi2", sampler=sample, compact=False, meta=meta)


def _rule_for(phi: GridField, rule: PolarGrid | None) -> PolarGrid:
    if rule is not None:
        return rule
    try:
        eps = float(phi.meta["eps"])
        delta = float(phi.meta["delta"])
        outer = float(phi.meta["outer"])
    except KeyError as exc:
        raise ValidationError(
            f"energy.{phi.name}", f"field carries no quadrature scale ({exc.args[0]})"
        ) from exc
    return PolarGrid(phi.grid.n, eps, delta, outer)


def _check_support(phi: GridField, rule: PolarGrid, interior_peak: float) -> None:
    if not phi.compact:
        return
    shell_values, _ = phi.evaluate(rule.outer_shell())
    edge = float(np.max(np.abs(shell_values)))
    if edge > SUPPORT_TOLERANCE * max(interior_peak, 1.0):
        raise SupportClipped(
            f"energy.{phi.name}",
            f"field is {edge:.3e} on the outer quadrature shell |x| = {rule.outer:g}",
            {"edge_value": edge, "outer": rule.outer},
        )


def _energy(chart: MetricChart, phi: GridField, rule: PolarGrid) -> Tuple[float, float, float]:
    n = chart.n
    c = conformal_coefficient(n)
    points, weights = rule.volume_nodes()
    value, gradient = phi.evaluate(points)
    _check_support(phi, rule, float(np.max(np.abs(value))) if value.size else 0.0)
    samples = metric_samples(chart, points)
    R = samples.R if samples.R is not None else np.zeros(value.size)
    dirichlet = np.einsum("mi,mij,mj->m", gradient, samples.g_inv, gradient)
    volume = float(np.sum(weights * samples.sqrt_det * (c * dirichlet + R * value * value)))

    b_points, b_weights = rule.boundary_nodes()
    b_value, _ = phi.evaluate(b_points)
    h = boundary_mean_curvature(chart, b_points)
    b_sqrt = metric_samples(chart, b_points, curvature_order=None).sqrt_det
    boundary = float(np.sum(b_weights * b_sqrt * 2.0 * (n - 1) * h * b_value * b_value))
    return volume + boundary, volume, boundary


def energy(chart: MetricChart, phi: GridField, rule: PolarGrid | None = None) -> float:
    """E_g(phi): interior Dirichlet and curvature terms plus the boundary mean-curvature term."""
    total, _, _ = _energy(chart, phi, _rule_for(phi, rule))
    return total


def _boundary_values(
    chart: MetricChart, phi: GridField, rule: PolarGrid, radius_min: float = 0.0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    points, weights = rule.boundary_nodes()
    keep = np.linalg.norm(points, axis=-1) > radius_min
    points, weights = points[keep], weights[keep]
    value, _ = phi.evaluate(points)
    sqrt_det = metric_samples(chart, points, curvature_order=None).sqrt_det
    return points, weights * sqrt_det, np.abs(value) ** boundary_exponent(chart.n)


def boundary_norm(
    chart: MetricChart,
    phi: GridField,
    f: BoundaryFunction | None,
    rule: PolarGrid | None = None,
) -> float:
    """Integral of f |phi|^(2(n-1)/(n-2)) over x_n = 0; ``f=None`` means f = 1."""
    active = _rule_for(phi, rule)
    points, weights, powered = _boundary_values(chart, phi, active)
    _check_support(phi, active, float(np.max(powered)) if powered.size else 0.0)
    factor = 1.0 if f is None else f.sample(points[:, :-1])
    return float(np.sum(weights * factor * powered))


def evaluate_report(
    chart: MetricChart,
    phi: GridField,
    f: BoundaryFunction,
    rule: PolarGrid | None = None,
) -> EnergyReport:
    """Energy, both boundary norms and the gap, with a coarsened-rule error estimate.

    f enters through f / max f, so c f and f give the same report.
    """
    n = chart.n
    f = f.ensure_normalized()
    active = _rule_for(phi, rule)
    Q_ball = dimension_constants(n).Q_ball
    power = (n - 2.0) / (n - 1.0)

    def measure(quadrature: PolarGrid) -> Tuple[float, float, float, float, float]:
        E, volume, boundary = _energy(chart, phi, quadrature)
        norm_f = boundary_norm(chart, phi, f, quadrature)
        norm_1 = boundary_norm(chart, phi, None, quadrature)
        return E, norm_f, norm_1, volume, boundary

    E, norm_f, norm_1, volume, boundary = measure(active)
    E_c, norm_f_c, _, _, _ = measure(active.coarsened())
    gap = Q_ball * max(norm_f, 0.0) ** power - E
    gap_c = Q_ball * max(norm_f_c, 0.0) ** power - E_c
    Q_of_phi = E / norm_1**power if norm_1 > 0.0 else float("inf")
    details: Dict[str, Any] = {
        "eps": phi.meta.get("eps"),
        "delta": phi.meta.get("delta"),
        "test_function": phi.meta.get("test_function", phi.name),
        "energy_volume": volume,
        "energy_boundary": boundary,
        "quadrature_nodes": int(active.volume_nodes()[1].size),
    }
    if not phi.compact:
        details["tail"] = _tail_estimate(n, phi, active.outer)
    logger.info(
        "energy.evaluate_report: %s eps=%s E=%.10g norm_f=%.10g gap=%.3e",
        details["test_function"], details["eps"], E, norm_f, gap,
    )
    return EnergyReport(
        E=E,
        boundary_norm_f=norm_f,
        boundary_norm_1=norm_1,
        Q_of_phi=Q_of_phi,
        gap=gap,
        quadrature_error_estimate=abs(gap - gap_c),
        details=details,
    )


def _tail_estimate(n: int, phi: GridField, outer: float) -> Dict[str, Any]:
    """Flat-space size of the energy and norm left outside the truncation radius."""
    eps = float(phi.meta["eps"])
    c = conformal_coefficient(n)
    constants = dimension_constants(n)
    half_sphere = 0.5 * constants.omega[n - 2]
    energy_tail = c * eps ** (n - 2) * (n - 2) * half_sphere * outer ** (2 - n)
    boundary_sphere = constants.omega[n - 3]
    norm_tail = boundary_sphere * eps ** (n - 1) * outer ** (1 - n) / (n - 1)
    return {
        "outer": outer,
        "energy_outside": energy_tail,
        "norm_outside": norm_tail,
        "note": "contributions beyond the Green truncation radius are reported, not added",
    }


@dataclass(slots=True)
class PowerMeanCheck:
    C: float
    measured_C: float
    slacks: List[float]
    holds: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "C": self.C,
            "measured_C": self.measured_C,
            "min_slack": min(self.slacks) if self.slacks else 0.0,
            "holds": self.holds,
        }


def power_mean_inequality_check(
    f1: Sequence[float], f2: Sequence[float], alpha: float, A: float | None = None
) -> PowerMeanCheck:
    """Termwise f1^alpha <= f2^alpha + C |f1 - f2| with C = alpha (A/2)^(alpha-1)."""
    where = "energy.power_mean_inequality_check"
    a = np.asarray(f1, dtype=float)
    b = np.asarray(f2, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValidationError(where, "sequences must be non-empty and of equal length")
    if not (0.0 < alpha < 1.0):
        raise ValidationError(where, f"alpha={alpha} must lie in (0, 1)")
    lower = float(min(a.min(), b.min())) if A is None else float(A)
    if lower <= 0.0:
        raise HypothesisViolated(where, "sequences must stay above a positive A")
    if float(min(a.min(), b.min())) < 0.5 * lower:
        raise HypothesisViolated(
            where, f"sequence dips below A/2 = {0.5 * lower:g}", {"A": lower}
        )
    C = alpha * (0.5 * lower) ** (alpha - 1.0)
    slacks = b**alpha + C * np.abs(a - b) - a**alpha
    differ = np.abs(a - b) > 0.0
    measured = (
        float(np.max((a[differ] ** alpha - b[differ] ** alpha) / np.abs(a - b)[differ]))
        if np.any(differ)
        else 0.0
    )
    return PowerMeanCheck(
        C=float(C),
        measured_C=measured,
        slacks=[float(s) for s in slacks],
        holds=bool(np.all(slacks >= -1e-14 * np.maximum(a**alpha, 1.0))),
    )


def perturbation_power_bound(sol: CorrectorSolution, p: BubbleParams) -> Dict[str, float]:
    """max over |x| < delta of |(v+psi)^q - v^q| / (eps^(n-1) (eps+|x|)^(3-2n))."""
    q = boundary_exponent(p.n)
    mesh = sol.grid.mesh()
    v, _ = bubble_eval(p, mesh)
    psi = sol.psi.values
    mask = sol.grid.norms() < p.delta
    radius = p.eps + sol.grid.norms()
    reference = p.eps ** (p.n - 1) * radius ** (3 - 2 * p.n)
    base = np.maximum(v + psi, 0.0)
    ratio = np.abs(base**q - v**q) / reference
    return {"measured_C": float(np.max(ratio[mask])), "exponent": q}


def phi_power_bound(phi: GridField, p: BubbleParams, radius: float | None = None) -> float:
    """max of phi^q / (eps^(n-1) (eps+|x|)^(2-2n)) over grid nodes inside ``radius``."""
    q = boundary_exponent(p.n)
    norms = phi.grid.norms()
    limit = 2.0 * p.delta if radius is None else radius
    mask = norms <= limit
    reference = p.eps ** (p.n - 1) * (p.eps + norms) ** (2 - 2 * p.n)
    return float(np.max(np.abs(phi.values[mask]) ** q / reference[mask]))


def tail_norm(chart: MetricChart, phi: GridField, rule: PolarGrid | None = None) -> float:
    """Boundary norm of phi restricted to |x'| > delta."""
    active = _rule_for(phi, rule)
    _, weights, powered = _boundary_values(chart, phi, active, radius_min=active.delta)
    return float(np.sum(weights * powered))


def power_law_fit(x: Sequence[float], y: Sequence[float]) -> Dict[str, float]:
    """Least-squares fit of log|y| = log c + k log x."""
    xs = np.asarray(x, dtype=float)
    ys = np.abs(np.asarray(y, dtype=float))
    keep = (xs > 0.0) & (ys > 0.0)
    if np.count_nonzero(keep) < 2:
        raise ValidationError("energy.power_law_fit", "need two positive samples")
    slope, intercept = np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)
    return {"exponent": float(slope), "coefficient": float(math.exp(intercept))}


def norm_expansion(n: int, eps_values: Sequence[float], norms_1: Sequence[float]) -> Dict[str, Any]:
    """boundary_norm_1 - A(n) along an eps sweep and its measured order."""
    A = dimension_constants(n).A
    deficits = [float(v) - A for v in norms_1]
    fit = power_law_fit(eps_values, deficits)
    return {"A": A, "deficits": deficits, **fit}


def boundary_deficit(
    n: int, eps_values: Sequence[float], norms_1: Sequence[float], norms_f: Sequence[float]
) -> Dict[str, Any]:
    """norm_1 - norm_f against 2(n-1) D(n) eps^2, the prediction for f = 1 - |x'|^2."""
    D = dimension_constants(n).require_D()
    deficits = [float(a) - float(b) for a, b in zip(norms_1, norms_f)]
    predicted = [2.0 * (n - 1) * D * e * e for e in eps_values]
    return {
        "deficits": deficits,
        "predicted": predicted,
        "ratios": [d / q for d, q in zip(deficits, predicted)],
        **power_law_fit(eps_values, deficits),
    }
