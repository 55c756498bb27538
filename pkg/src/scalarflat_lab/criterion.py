"""Hypothesis checks, the case table and energy-gap scans with scaling-law fits."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .artifacts import LDJSONLogger
from .bubble import BubbleParams, dimension_constants
from .corrector import solve_corrector
from .energy import (
    BoundaryFunction,
    assemble_phi1,
    assemble_phi2,
    cutoff_bubble,
    evaluate_report,
    power_law_fit,
)
from .exceptions import (
    InsufficientSweep,
    NotSomewherePositive,
    NotUmbilic,
    RegimeMismatch,
    ValidationError,
)
from .geometry import TAU_CHART, CurvatureData, MetricChart, build_chart, curvature_data
from .green import GreenData, flux_sweep, solve_green
from .grid import GridField, HalfBallGrid, Sampler
from .models import ChartSpec

logger = logging.getLogger(__name__)

CASES = (
    "non_umbilic_dim5plus",
    "non_umbilic_dim4",
    "umbilic_dim6plus",
    "escobar_case",
    "none",
)
MODELS = ("eps2", "eps2_log", "eps_pow_2a0", "eps_n2_log")
EQUALITY_MODEL = "equality-case"
FLUX_MODEL = "flux-limit"
TIE_TOLERANCE = 0.05
DEFAULT_POINTS = {3: 33, 4: 33, 5: 17, 6: 9}


def default_points(n: int) -> int:
    return DEFAULT_POINTS.get(n, 9)


@dataclass(slots=True)
class ConditionReport:
    n: int
    condition_star: bool
    star_evidence: Dict[int, float]
    condition_star_star: bool
    star_star_evidence: Dict[str, Any]
    umbilic_at_p: bool
    applicable_theorem: str
    alpha0: int | None = None
    in_Z_set: bool = False

    @property
    def predicted(self) -> str | None:
        return predicted_model(self)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "condition_star": self.condition_star,
            "star_evidence": {str(k): v for k, v in sorted(self.star_evidence.items())},
            "condition_star_star": self.condition_star_star,
            "star_star_evidence": self.star_star_evidence,
            "umbilic_at_p": self.umbilic_at_p,
            "applicable_theorem": self.applicable_theorem,
            "alpha0": self.alpha0,
            "in_Z_set": self.in_Z_set,
            "predicted_model": self.predicted,
        }


def c_bar(n: int, theta_hat: float = 1.0) -> float:
    """Surrogate constant for the Laplacian condition: theta B / (Q_ball C_L D).

    C_L is the power-mean constant alpha (A/2)^(alpha-1) at A = A(n). D(n)
    diverges for n <= 4, where the surrogate is 0.
    """
    constants = dimension_constants(n)
    if constants.D is None or n <= 4:
        return 0.0
    alpha = (n - 2.0) / (n - 1.0)
    C_L = alpha * (0.5 * constants.A) ** (alpha - 1.0)
    return theta_hat * constants.B / (constants.Q_ball * C_L * constants.D)


def applicable_case(n: int, umbilic: bool, star: bool, star_star: bool) -> str:
    if n == 3:
        return "escobar_case"
    if not umbilic:
        if n == 4:
            return "non_umbilic_dim4"
        return "non_umbilic_dim5plus" if star_star else "none"
    if n >= 6:
        return "umbilic_dim6plus" if star else "none"
    return "escobar_case" if star else "none"


def predicted_model(conditions: ConditionReport) -> str | None:
    """Gap model the case table predicts, or None when no scaling is expected."""
    n = conditions.n
    if not conditions.umbilic_at_p:
        return "eps2_log" if n == 4 else "eps2"
    if n < 6:
        return None
    if conditions.in_Z_set or conditions.alpha0 is None:
        return None
    if 2 * conditions.alpha0 < n - 2:
        return "eps_pow_2a0"
    return "eps_n2_log"


def check_conditions(
    chart: MetricChart,
    f: BoundaryFunction,
    c_n: float | None = None,
    curvature: CurvatureData | None = None,
    theta_hat: float = 1.0,
) -> ConditionReport:
    """Conditions on f at the concentration point, taken on f / max f."""
    where = "criterion.check_conditions"
    n = chart.n
    if f.n != n:
        raise ValidationError(where, "boundary function and chart dimensions differ")
    if f.probe_max() <= 0.0:
        raise NotSomewherePositive(where, "max f <= 0; f must be somewhere positive")
    f = f.ensure_normalized()
    data = curvature if curvature is not None else curvature_data(chart)
    evidence = {k: f.derivative_norm(k) for k in range(1, n - 1)}
    star = all(value <= TAU_CHART for value in evidence.values())
    constant = c_bar(n, theta_hat) if c_n is None else float(c_n)
    source = f"surrogate(theta_hat={theta_hat:g})" if c_n is None else "configured"
    laplacian = f.laplacian0()
    star_star = laplacian <= constant * data.pi_norm_sq
    case = applicable_case(n, data.umbilic, star, star_star)
    return ConditionReport(
        n=n,
        condition_star=star,
        star_evidence=evidence,
        condition_star_star=star_star,
        star_star_evidence={
            "laplacian_f": laplacian,
            "pi_norm_sq": data.pi_norm_sq,
            "umbilic_measure": data.umbilic_measure,
            "c_n": constant,
            "c_n_source": source,
        },
        umbilic_at_p=data.umbilic,
        applicable_theorem=case,
        alpha0=data.alpha0,
        in_Z_set=data.in_Z_set,
    )


def classify_Z_case(chart: MetricChart, curvature: CurvatureData | None = None) -> Dict[str, Any]:
    """Split umbilic charts by whether Z vanishes; the nonvanishing case carries alpha0."""
    where = "criterion.classify_Z_case"
    if chart.n < 6:
        raise ValidationError(where, f"Z classification needs n >= 6, got n={chart.n}")
    data = curvature if curvature is not None else curvature_data(chart)
    if not data.umbilic:
        raise NotUmbilic(where, f"|pi|^2 = {data.pi_norm_sq:.3e} at the origin")
    if data.in_Z_set:
        return {"case": "z_vanishes", "alpha0": None, "deciding_quantity": "flux_limit_sign"}
    return {"case": "z_nonzero", "alpha0": data.alpha0, "deciding_quantity": "gap_scaling"}


def _basis(model: str, eps: np.ndarray, delta: float, n: int, alpha0: int | None) -> np.ndarray:
    if model == "eps2":
        return eps**2
    if model == "eps2_log":
        return eps**2 * np.log(delta / eps)
    if model == "eps_pow_2a0":
        if alpha0 is None:
            raise ValidationError("criterion.fit_scaling", "eps_pow_2a0 needs alpha0")
        return eps ** (2 * alpha0)
    return eps ** (n - 2) * np.log(delta / eps)


def fit_scaling(
    sweep: Sequence[Mapping[str, float]],
    delta: float,
    n: int,
    alpha0: int | None = None,
    predicted: str | None = None,
    key: str = "gap",
) -> Dict[str, Any]:
    """Least-squares competition of the gap models on relative residuals of ``row[key]``."""
    where = "criterion.fit_scaling"
    if len(sweep) < 4:
        raise InsufficientSweep(where, f"need at least 4 sweep points, got {len(sweep)}")
    eps = np.array([float(row["eps"]) for row in sweep])
    gap = np.array([float(row[key]) for row in sweep])
    if np.min(eps) <= 0.0 or np.max(eps) / np.min(eps) < 8.0 * (1.0 - 1e-12):
        raise InsufficientSweep(where, "sweep must span a factor of at least 8 in eps")
    if np.any(gap == 0.0):
        raise InsufficientSweep(where, f"{key} values must be nonzero for a relative fit")
    scores: Dict[str, Dict[str, float]] = {}
    for model in MODELS:
        if model == "eps_pow_2a0" and alpha0 is None:
            continue
        basis = _basis(model, eps, delta, n, alpha0)
        ratio = basis / gap
        c = float(np.sum(ratio) / np.sum(ratio * ratio))
        residual = float(np.sqrt(np.mean((1.0 - c * ratio) ** 2)))
        scores[model] = {"coefficient": c, "residual": residual}
    best = min(scores, key=lambda name: scores[name]["residual"])
    if predicted in scores and predicted != best:
        floor = scores[best]["residual"]
        if scores[predicted]["residual"] <= floor * (1.0 + TIE_TOLERANCE) + 1e-12:
            best = predicted
    exponent = None
    if np.all(gap > 0.0) or np.all(gap < 0.0):
        exponent = power_law_fit(eps, gap)["exponent"]
    return {
        "model": best,
        "coefficient": scores[best]["coefficient"],
        "residual": scores[best]["residual"],
        "exponent": exponent,
        "scores": scores,
    }


def _log_basis(model: str, t: float, delta: float, n: int, alpha0: int | None) -> float:
    """log of the model basis at eps = exp(t), for t < log delta."""
    if model == "eps2":
        return 2.0 * t
    if model == "eps2_log":
        return 2.0 * t + math.log(math.log(delta) - t)
    if model == "eps_pow_2a0":
        return 2.0 * float(alpha0) * t
    return (n - 2.0) * t + math.log(math.log(delta) - t)


def crossover(
    fitted: Mapping[str, Any],
    reference: Mapping[str, float],
    delta: float,
    n: int,
    eps_min: float,
    alpha0: int | None = None,
) -> Dict[str, Any]:
    """Extrapolated eps at which the fitted excess outgrows the flat cutoff loss.

    ``reference`` is a power law c_ref eps^k_ref for |reference gap|. The
    result is reported as log10 eps since it can lie far below double range.
    """
    coefficient = float(fitted.get("coefficient", 0.0))
    model = fitted.get("model")
    if coefficient <= 0.0 or model not in MODELS:
        return {"log10_eps": None, "reason": "excess coefficient is not positive"}
    if model == "eps_pow_2a0" and alpha0 is None:
        return {"log10_eps": None, "reason": "eps_pow_2a0 needs alpha0"}
    log_c = math.log(coefficient) - math.log(float(reference["coefficient"]))
    k_ref = float(reference["exponent"])

    def balance(t: float) -> float:
        return log_c + _log_basis(model, t, delta, n, alpha0) - k_ref * t

    upper = math.log(eps_min)
    if balance(upper) >= 0.0:
        return {"log10_eps": upper / math.log(10.0), "reason": "reached within the sweep"}
    lower = upper
    while balance(lower) < 0.0:
        lower -= 50.0
        if lower < upper - 5000.0:
            return {"log10_eps": None, "reason": "no crossover above exp(-5000)"}
    root = float(brentq(balance, lower, upper, xtol=1e-10))
    return {"log10_eps": root / math.log(10.0), "reason": "extrapolated"}


def witness(phi: GridField, norm_f: float, E: float, n: int) -> Tuple[GridField, Dict[str, Any]]:
    """u = norm_f^(-(n-2)/(2(n-1))) phi, which satisfies the boundary constraint exactly."""
    if norm_f <= 0.0:
        raise ValidationError("criterion.witness", "boundary norm must be positive")
    scale = norm_f ** (-(n - 2.0) / (2.0 * (n - 1.0)))
    sampler = phi.sampler
    scaled: Sampler | None = None
    if sampler is not None:
        inner = sampler

        def scaled(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            value, gradient = inner(points)
            return scale * value, scale * gradient

    u = GridField(
        phi.grid,
        scale * phi.values,
        "u",
        sampler=scaled,
        compact=phi.compact,
        meta=dict(phi.meta),
    )
    Q_value = scale * scale * E
    Q_ball = dimension_constants(n).Q_ball
    return u, {
        "scale": scale,
        "constraint": scale ** (2.0 * (n - 1) / (n - 2)) * norm_f,
        "Q_value": Q_value,
        "Q_ball": Q_ball,
        "below_Q_ball": Q_value < Q_ball,
    }


@dataclass(slots=True)
class GapReport:
    sweep: List[Dict[str, Any]]
    delta: float
    fitted_model: Dict[str, Any]
    verdict: bool
    theta_hat: float | None
    conditions: ConditionReport
    test_function: str
    witness: Dict[str, Any] | None = None
    extras: Dict[str, Any] = field(default_factory=dict)
    u: GridField | None = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sweep": self.sweep,
            "delta": self.delta,
            "fitted_model": self.fitted_model,
            "verdict": self.verdict,
            "theta_hat": self.theta_hat,
            "conditions": self.conditions.to_dict(),
            "test_function": self.test_function,
            "witness": self.witness,
            **self.extras,
        }


def _select_test_function(testfn: str, chart: MetricChart, conditions: ConditionReport) -> str:
    where = "criterion.gap_scan"
    if testfn not in ("auto", "phi1", "phi2"):
        raise ValidationError(where, f"testfn must be auto, phi1 or phi2, got {testfn!r}")
    if testfn == "phi2" and not conditions.umbilic_at_p:
        raise RegimeMismatch(where, "phi2 belongs to the umbilic regime; chart is non-umbilic")
    if testfn == "phi2" and chart.n < 6:
        raise RegimeMismatch(where, f"phi2 needs n >= 6, got n={chart.n}")
    if testfn != "auto":
        return testfn
    if conditions.umbilic_at_p and chart.n >= 6 and not chart.is_flat:
        return "phi2"
    return "phi1"


def green_setup(chart: MetricChart, delta: float, points: int) -> Tuple[HalfBallGrid, float]:
    """Green grid of radius max(4 delta, 2.2 * support), graded so the pole is resolved."""
    rho_out = max(4.0 * delta, 2.2 * chart.support_radius)
    grading = chart.support_radius / 6.0
    return HalfBallGrid(chart.n, rho_out, points, eps=grading), rho_out


def gap_scan(
    chart: MetricChart,
    f: BoundaryFunction,
    delta: float,
    eps_list: Sequence[float],
    testfn: str = "auto",
    points: int | None = None,
    threads: int = 1,
    tol: float = 1e-8,
    c_n: float | None = None,
    stream: LDJSONLogger | None = None,
) -> GapReport:
    """Energy gap Q_ball * norm_f^((n-2)/(n-1)) - E along a decreasing eps sweep at fixed delta.

    f is replaced by f / max f. For phi1 on a curved chart every row also carries the
    gap of the plain cutoff bubble on the flat chart at the same eps, delta
    and quadrature (``reference_gap``) and ``excess = gap - reference_gap``;
    the scaling models are fitted to the excess.
    """
    where = "criterion.gap_scan"
    n = chart.n
    eps_values = [float(e) for e in eps_list]
    if len(eps_values) < 4:
        raise InsufficientSweep(where, f"need at least 4 eps values, got {len(eps_values)}")
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValidationError(where, "eps values must be strictly decreasing")
    if eps_values[-1] <= 0.0 or eps_values[0] > 0.5 * delta * (1.0 + 1e-12):
        raise ValidationError(where, "eps values must lie in (0, delta/2]")
    if delta > 0.5 * chart.delta_max * (1.0 + 1e-12):
        limit = 0.5 * chart.delta_max
        raise ValidationError(where, f"delta={delta:g} exceeds delta_max/2 = {limit:g}")

    data = curvature_data(chart)
    conditions = check_conditions(chart, f, c_n=c_n, curvature=data)
    f = f.ensure_normalized()
    chosen = _select_test_function(testfn, chart, conditions)
    flat = None
    if chosen == "phi1" and not chart.is_flat:
        flat = build_chart(ChartSpec(n, chart.delta_max, "flat"))
    grid_points = default_points(n) if points is None else points

    gd: GreenData | None = None
    if chosen == "phi2":
        green_grid, rho_out = green_setup(chart, delta, grid_points)
        gd = solve_green(chart, green_grid, rho_out, tol=tol, stream=stream)

    def run(eps: float) -> Tuple[Dict[str, Any], GridField, float, float]:
        p = BubbleParams(n, eps, delta)
        if chart.is_flat:
            phi = cutoff_bubble(p)
        else:
            grid = HalfBallGrid(n, 2.0 * delta, grid_points, eps=eps)
            sol = solve_corrector(data.H, p, grid, tol=tol, stream=stream)
            phi = assemble_phi2(p, sol, gd) if gd is not None else assemble_phi1(p, sol)
        report = evaluate_report(chart, phi, f)
        row = {
            "eps": eps,
            "E": report.E,
            "norm_f": report.boundary_norm_f,
            "norm_1": report.boundary_norm_1,
            "gap": report.gap,
            "quadrature_error": report.quadrature_error_estimate,
            "Q_of_phi": report.Q_of_phi,
        }
        if flat is not None:
            reference = evaluate_report(flat, cutoff_bubble(p), f)
            row["reference_gap"] = reference.gap
            row["excess"] = report.gap - reference.gap
            row["excess_error"] = (
                report.quadrature_error_estimate + reference.quadrature_error_estimate
            )
        if stream is not None:
            stream.append({"solver": "gap_scan", **row})
        return row, phi, report.boundary_norm_f, report.E

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, eps_values))
    sweep = [row for row, _, _, _ in results]
    gaps = [row["gap"] for row in sweep]
    errors = [row["quadrature_error"] for row in sweep]

    extras: Dict[str, Any] = {"chart_flat": chart.is_flat}
    theta_hat: float | None = None
    if chart.is_flat:
        Q_ball = dimension_constants(n).Q_ball
        ratios = [row["E"] / row["norm_f"] ** ((n - 2.0) / (n - 1.0)) for row in sweep]
        fitted: Dict[str, Any] = {
            "model": EQUALITY_MODEL,
            "coefficient": 0.0,
            "residual": abs(ratios[-1] - Q_ball) / Q_ball,
            "exponent": None,
        }
        extras["quotient_ratios"] = ratios
        extras["quotient_limit_relative_error"] = abs(ratios[-1] - Q_ball) / Q_ball
        verdict = False
    else:
        predicted = conditions.predicted
        alpha0 = conditions.alpha0
        key = "excess" if flat is not None else "gap"
        fitted = fit_scaling(sweep, delta, n, alpha0=alpha0, predicted=predicted, key=key)
        fitted["fitted_to"] = key
        tail_ok = all(g > e for g, e in zip(gaps[-2:], errors[-2:]))
        verdict = bool(tail_ok and fitted["coefficient"] > 0.0)
        if flat is not None:
            excess_ok = all(row["excess"] > row["excess_error"] for row in sweep[-2:])
            extras["excess_verdict"] = bool(excess_ok and fitted["coefficient"] > 0.0)
            references = [row["reference_gap"] for row in sweep]
            if all(r < 0.0 for r in references):
                loss = power_law_fit(eps_values, references)
                extras["reference_fit"] = loss
                extras["crossover"] = crossover(fitted, loss, delta, n, eps_values[-1], alpha0)
        pi_sq = conditions.star_star_evidence["pi_norm_sq"]
        if fitted["model"] == "eps2" and pi_sq > 0.0:
            theta_hat = fitted["coefficient"] / (dimension_constants(n).B * pi_sq)
        elif fitted["model"] == "eps2_log" and pi_sq > 0.0:
            theta_hat = fitted["coefficient"] / pi_sq
        if theta_hat is not None and theta_hat > 0.0 and c_n is None:
            before = conditions.condition_star_star
            conditions = check_conditions(chart, f, curvature=data, theta_hat=theta_hat)
            extras["theta_feedback"] = {
                "theta_hat": theta_hat,
                "star_star_surrogate": before,
                "star_star_fitted": conditions.condition_star_star,
            }
        if gd is not None and conditions.in_Z_set:
            deltas = [delta, 0.5 * delta, 0.25 * delta]
            usable = [d for d in deltas if d > gd.exclusion_radius]
            flux = flux_sweep(gd, chart, usable)
            extras["flux"] = flux
            fitted = {**fitted, "model": FLUX_MODEL}
            verdict = flux["limit_sign"] > 0
        extras["predicted_model"] = predicted
    if gd is not None:
        extras["green"] = gd.summary()

    report = GapReport(
        sweep=sweep,
        delta=delta,
        fitted_model=fitted,
        verdict=verdict,
        theta_hat=theta_hat,
        conditions=conditions,
        test_function=chosen,
        extras=extras,
    )
    if verdict:
        _, phi, norm_f, E = results[-1]
        report.u, report.witness = witness(phi, norm_f, E, n)
    logger.info(
        "%s: n=%d delta=%g model=%s verdict=%s", where, n, delta, fitted["model"], verdict
    )
    return report


def eps_ladder(eps0: float, ratio: float, count: int) -> List[float]:
    """eps0, eps0/ratio, ... with ``count`` entries."""
    if eps0 <= 0.0 or ratio <= 1.0 or count < 1:
        raise ValidationError("criterion.eps_ladder", "need eps0 > 0, ratio > 1, count >= 1")
    return [eps0 / ratio**k for k in range(count)]
