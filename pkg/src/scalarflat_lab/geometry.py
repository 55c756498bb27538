"""Fermi-chart metric models and their curvature data.

A chart is a polynomial trace-free perturbation ``h`` of the Euclidean metric on
the half-ball, tapered to zero between ``delta_max/2`` and ``5*delta_max/8``;
the metric is ``g = exp(h)``. Everything here is a pure function of the chart.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Protocol, Sequence, Tuple

import numpy as np

from .bubble import DEFAULT_CUTOFF
from .exceptions import InvariantViolation, NonPositiveDefinite, StencilOutOfDomain
from .linalg import fd_weights
from .models import ChartSpec, CoefficientKey, format_coefficient_key
from .utils import make_rng

logger = logging.getLogger(__name__)

TAU_CHART = 1e-8
TAU_Z = 1e-10
TAU_UMBILIC = 1e-10
PROBE_SEED = 7


class MetricModel(Protocol):
    n: int
    delta_max: float

    def metric(self, points: np.ndarray) -> np.ndarray: ...


def _multi_indices(n: int, degree: int) -> List[Tuple[int, ...]]:
    out: List[Tuple[int, ...]] = []
    for combo in itertools.combinations_with_replacement(range(n), degree):
        alpha = [0] * n
        for axis in combo:
            alpha[axis] += 1
        out.append(tuple(alpha))
    return out


def multi_indices(n: int, max_degree: int) -> List[Tuple[int, ...]]:
    """All multi-indices with 1 <= |alpha| <= max_degree, in graded order."""
    return [alpha for q in range(1, max_degree + 1) for alpha in _multi_indices(n, q)]


def _monomials(points: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    return np.prod(points[..., None, :] ** exponents, axis=-1)


@dataclass(slots=True)
class TaylorTensor:
    """Polynomial H(x) = sum h_{ik,alpha} x^alpha with (i, k) stored as i <= k."""

    n: int
    coefficients: Dict[CoefficientKey, float] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return (self.n - 2) // 2

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1] + (self.n, self.n))
        for (i, k, alpha), value in self.coefficients.items():
            mono = value * np.prod(pts ** np.asarray(alpha), axis=-1)
            out[..., i, k] += mono
            if i != k:
                out[..., k, i] += mono
        return out

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Derivative of H with the derivative index last."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1] + (self.n, self.n, self.n))
        for (i, k, alpha), value in self.coefficients.items():
            for j in range(self.n):
                if alpha[j] == 0:
                    continue
                lowered = np.asarray(alpha)
                lowered[j] -= 1
                mono = value * alpha[j] * np.prod(pts**lowered, axis=-1)
                out[..., i, k, j] += mono
                if i != k:
                    out[..., k, i, j] += mono
        return out

    def ordered_sum_squares(self, degree: int | None = None) -> float:
        """Sum over ordered pairs (i, k) of |h_{ik,alpha}|^2, optionally at one |alpha|."""
        total = 0.0
        for (i, k, alpha), value in self.coefficients.items():
            if degree is not None and sum(alpha) != degree:
                continue
            total += (1.0 if i == k else 2.0) * value * value
        return total

    @property
    def alpha0(self) -> int | None:
        degrees = [sum(alpha) for (_, _, alpha), value in self.coefficients.items() if value != 0.0]
        return min(degrees) if degrees else None

    def to_dict(self) -> Dict[str, float]:
        items = sorted(self.coefficients.items())
        return {format_coefficient_key(key): value for key, value in items}


@dataclass(slots=True)
class MetricChart:
    spec: ChartSpec
    H: TaylorTensor = field(init=False)
    taper_scale: float = field(init=False)
    _exponents: np.ndarray = field(init=False, repr=False)
    _entries: List[Tuple[int, int, float]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.H = TaylorTensor(self.spec.n, dict(self.spec.coefficients))
        self.taper_scale = 3.0 * self.spec.delta_max / 8.0
        keys = sorted(self.spec.coefficients)
        self._exponents = np.array([alpha for (_, _, alpha) in keys], dtype=float).reshape(
            len(keys), self.spec.n
        )
        self._entries = [(i, k, self.spec.coefficients[(i, k, a)]) for (i, k, a) in keys]

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def delta_max(self) -> float:
        return self.spec.delta_max

    @property
    def is_flat(self) -> bool:
        return not self._entries

    @property
    def plateau_radius(self) -> float:
        return 0.5 * self.spec.delta_max

    @property
    def support_radius(self) -> float:
        return 5.0 * self.spec.delta_max / 8.0

    def _taper(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        radius = np.linalg.norm(points, axis=-1)
        t = radius / self.taper_scale
        value = DEFAULT_CUTOFF.value(t)
        safe = np.where(radius > 0.0, radius, 1.0)
        slope = DEFAULT_CUTOFF.derivative(t) / self.taper_scale / safe
        return value, slope[..., None] * points

    def h(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1] + (self.n, self.n))
        if self.is_flat:
            return out
        taper, _ = self._taper(pts)
        mono = _monomials(pts, self._exponents)
        for index, (i, k, value) in enumerate(self._entries):
            out[..., i, k] += value * mono[..., index]
            if i != k:
                out[..., k, i] += value * mono[..., index]
        return taper[..., None, None] * out

    def dh(self, points: np.ndarray) -> np.ndarray:
        """Analytic derivative of h, derivative index last."""
        pts = np.asarray(points, dtype=float)
        if self.is_flat:
            return np.zeros(pts.shape[:-1] + (self.n,) * 3)
        taper, taper_grad = self._taper(pts)
        raw = self.H.evaluate(pts)
        return taper[..., None, None, None] * self.H.gradient(pts) + (
            raw[..., :, :, None] * taper_grad[..., None, None, :]
        )

    def metric(self, points: np.ndarray) -> np.ndarray:
        return matrix_exp_sym(self.h(points))

    def metric_inverse(self, points: np.ndarray) -> np.ndarray:
        return matrix_exp_sym(-self.h(points))

    def sqrt_det(self, points: np.ndarray) -> np.ndarray:
        return np.exp(0.5 * np.trace(self.h(points), axis1=-2, axis2=-1))

    def h_sampler(self, points: np.ndarray) -> np.ndarray:
        """h recovered from g through the matrix logarithm."""
        return matrix_log_sym(self.metric(points))


def matrix_exp_sym(h: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(h)
    return np.einsum("...ik,...k,...jk->...ij", vectors, np.exp(values), vectors)


def matrix_log_sym(g: np.ndarray, where: str = "geometry.matrix_log") -> np.ndarray:
    values, vectors = np.linalg.eigh(g)
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise NonPositiveDefinite(where, "metric sample is not positive definite")
    return np.einsum("...ik,...k,...jk->...ij", vectors, np.log(values), vectors)


def _check_coefficients(spec: ChartSpec) -> None:
    where = "geometry.build_chart"
    n = spec.n
    traces: Dict[Tuple[int, ...], float] = {}
    for (i, k, alpha), value in spec.coefficients.items():
        if k == n - 1:
            raise InvariantViolation(
                where, f"h_in = 0 fails: coefficient {format_coefficient_key((i, k, alpha))}"
            )
        if sum(alpha) == 1 and alpha[n - 1] == 0:
            raise InvariantViolation(
                where,
                f"tangential first derivative of h at 0 must vanish: "
                f"{format_coefficient_key((i, k, alpha))}",
            )
        if i == k:
            traces[alpha] = traces.get(alpha, 0.0) + value
    scale = max([1.0] + [abs(v) for v in spec.coefficients.values()])
    for alpha, trace in traces.items():
        if abs(trace) > TAU_CHART * scale:
            raise InvariantViolation(
                where, f"trace-free fails at alpha={''.join(map(str, alpha))} (trace {trace:g})"
            )


def probe_points(
    spec: ChartSpec, count: int = 64, seed: int = PROBE_SEED
) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic interior and boundary probe points covering the taper band."""
    rng = make_rng(seed)
    n = spec.n
    direction = rng.normal(size=(count, n))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    direction[:, -1] = np.abs(direction[:, -1])
    radius = 0.7 * spec.delta_max * rng.random(count) ** (1.0 / n)
    interior = radius[:, None] * direction
    tangential = rng.normal(size=(count // 2, n - 1))
    tangential /= np.linalg.norm(tangential, axis=-1, keepdims=True)
    b_radius = 0.7 * spec.delta_max * rng.random(count // 2)
    boundary = np.concatenate(
        [b_radius[:, None] * tangential, np.zeros((count // 2, 1))], axis=-1
    )
    return interior, boundary


def build_chart(spec: ChartSpec) -> MetricChart:
    where = "geometry.build_chart"
    spec.validate(where)
    _check_coefficients(spec)
    chart = MetricChart(spec)
    n = spec.n
    interior, boundary = probe_points(spec)
    points = np.concatenate([np.zeros((1, n)), interior, boundary])

    g = chart.metric(points)
    eigen = np.linalg.eigvalsh(g)
    if not np.all(np.isfinite(eigen)) or np.any(eigen <= 0.0):
        bad = int(np.argmin(np.where(np.isfinite(eigen), eigen, -np.inf).min(axis=-1)))
        raise NonPositiveDefinite(where, f"g fails SPD at x={points[bad].tolist()}")
    if np.max(np.abs(g[0] - np.eye(n))) > TAU_CHART:
        raise InvariantViolation(where, "g(0) = identity fails")
    normal_row = g[..., n - 1, :]
    if np.max(np.abs(normal_row - np.eye(n)[n - 1])) > TAU_CHART:
        bad = int(np.argmax(np.max(np.abs(normal_row - np.eye(n)[n - 1]), axis=-1)))
        raise InvariantViolation(where, f"g_in = delta_in fails at x={points[bad].tolist()}")

    step = spec.delta_max / 64.0
    for a in range(n - 1):
        offset = np.zeros(n)
        offset[a] = step
        coarse = (chart.metric(offset[None])[0] - chart.metric(-offset[None])[0]) / (2 * step)
        fine = (chart.metric(0.5 * offset[None])[0] - chart.metric(-0.5 * offset[None])[0]) / step
        derivative = (4.0 * fine - coarse) / 3.0
        if np.max(np.abs(derivative[: n - 1, : n - 1])) > 1e-6:
            raise InvariantViolation(where, f"d_{a + 1} g_bc(0) = 0 fails")

    g_boundary = chart.metric(boundary)
    contracted = np.einsum("ma,mab->mb", boundary[:, : n - 1], g_boundary[:, : n - 1, : n - 1])
    deviation = np.max(np.abs(contracted - boundary[:, : n - 1]), initial=0.0)
    if deviation > TAU_CHART * max(1.0, spec.delta_max):
        raise InvariantViolation(
            where, f"sum_a x_a g_ab = x_b fails on the boundary ({deviation:g})"
        )

    h_direct = chart.h(points)
    h_log = chart.h_sampler(points)
    scale = max(1.0, float(np.max(np.abs(h_direct))))
    if np.max(np.abs(h_log - h_direct)) > TAU_CHART * scale:
        raise InvariantViolation(where, "exp/log round trip exceeds tolerance")

    order = determinant_order(chart)
    if order is not None and order < 2 * spec.d + 2 - 0.25:
        raise InvariantViolation(
            where, f"det g - 1 decays at order {order:.2f} < {2 * spec.d + 2}"
        )
    logger.info("%s: chart n=%d kind=%s passes probe checks", where, n, spec.model_kind)
    return chart


def determinant_order(chart: MetricChart) -> float | None:
    """Fitted order of det g - 1 along a radial sample; None when det g = 1 to roundoff."""
    n = chart.n
    direction = np.ones(n) / math.sqrt(n)
    radii = chart.plateau_radius * np.geomspace(0.05, 0.8, 8)
    points = radii[:, None] * direction[None, :]
    deviation = np.abs(np.linalg.det(chart.metric(points)) - 1.0)
    if np.max(deviation) <= 1e-12:
        return None
    slope, _ = np.polyfit(np.log(radii), np.log(np.maximum(deviation, 1e-300)), 1)
    return float(slope)


def _stencil_offsets(derivative: int, normal: bool) -> np.ndarray:
    size = derivative + 4
    if normal:
        return np.arange(size, dtype=float)
    half = (size + 1) // 2
    return np.arange(-half, half + 1, dtype=float)


def taylor_coefficients(chart: MetricChart, step: float | None = None) -> TaylorTensor:
    """Taylor coefficients of h at 0 from tensor-product difference stencils of log g."""
    where = "geometry.taylor_coefficients"
    n = chart.n
    d = chart.spec.d
    hs = chart.delta_max / 64.0 if step is None else step
    coefficients: Dict[CoefficientKey, float] = {}
    scale = max([1.0] + [abs(v) for v in chart.spec.coefficients.values()])
    for alpha in multi_indices(n, d):
        axes = [axis for axis in range(n) if alpha[axis] > 0]
        stencils = []
        for axis in axes:
            offsets = _stencil_offsets(alpha[axis], normal=axis == n - 1)
            stencils.append((axis, offsets, fd_weights(offsets, alpha[axis])))
        reach = hs * math.sqrt(sum(float(np.max(np.abs(o))) ** 2 for _, o, _ in stencils))
        if reach >= chart.plateau_radius:
            raise StencilOutOfDomain(
                where, f"stencil reach {reach:g} leaves the plateau radius {chart.plateau_radius:g}"
            )
        grids = np.meshgrid(*[o for _, o, _ in stencils], indexing="ij")
        weights = np.ones(())
        for _, _, w in stencils:
            weights = np.multiply.outer(weights, w)
        points = np.zeros(grids[0].shape + (n,))
        for (axis, _, _), grid in zip(stencils, grids):
            points[..., axis] = grid * hs
        samples = chart.h_sampler(points.reshape(-1, n)).reshape(points.shape[:-1] + (n, n))
        summed = tuple(range(len(axes)))
        derivative = np.tensordot(weights, samples, axes=(summed, summed))
        derivative /= hs ** sum(alpha)
        factorial = float(np.prod([math.factorial(a) for a in alpha]))
        for i in range(n):
            for k in range(i, n):
                value = float(derivative[i, k]) / factorial
                if abs(value) > 1e-8 * scale:
                    coefficients[(i, k, alpha)] = value
    return TaylorTensor(n, coefficients)


@dataclass(slots=True)
class SecondFundamentalForm:
    pi0: np.ndarray
    pi_norm_sq: float
    mean_curvature0: float
    identity_defect: float


def second_fundamental_form(
    chart: MetricChart, H: TaylorTensor | None = None
) -> SecondFundamentalForm:
    """pi_ab(0) = -(1/2) d_n h_ab(0) read off the first-order Taylor coefficients."""
    tensor = taylor_coefficients(chart) if H is None else H
    n = chart.n
    normal = tuple(1 if axis == n - 1 else 0 for axis in range(n))
    pi0 = np.zeros((n - 1, n - 1))
    for (i, k, alpha), value in tensor.coefficients.items():
        if alpha == normal and k < n - 1:
            pi0[i, k] = pi0[k, i] = -0.5 * value
    pi_norm_sq = float(np.sum(pi0 * pi0))
    defect = tensor.ordered_sum_squares(1) - 4.0 * pi_norm_sq
    return SecondFundamentalForm(
        pi0=pi0,
        pi_norm_sq=pi_norm_sq,
        mean_curvature0=float(np.trace(pi0)) / (n - 1),
        identity_defect=float(defect),
    )


def classify_point(form: SecondFundamentalForm) -> Tuple[bool, float]:
    """Umbilicity at 0 from |pi - h_g g|^2."""
    m = form.pi0.shape[0]
    trace_free = form.pi0 - form.mean_curvature0 * np.eye(m)
    measure = float(np.sum(trace_free * trace_free))
    return measure <= TAU_UMBILIC, measure


Polynomial = Dict[Tuple[int, ...], np.ndarray]


@dataclass(slots=True)
class AlgebraicCurvature:
    n: int
    A: Polynomial
    Z: Polynomial
    in_Z_set: bool
    alpha0: int | None
    max_abs_Z: float

    def Z_at(self, point: Sequence[float]) -> np.ndarray:
        return _evaluate_polynomial(self.Z, np.asarray(point, dtype=float), (self.n,) * 4)

    def A_at(self, point: Sequence[float]) -> np.ndarray:
        return _evaluate_polynomial(self.A, np.asarray(point, dtype=float), (self.n,) * 2)


def _evaluate_polynomial(
    poly: Polynomial, point: np.ndarray, shape: Tuple[int, ...]
) -> np.ndarray:
    out = np.zeros(shape)
    for beta, tensor in poly.items():
        out += tensor * float(np.prod(point ** np.asarray(beta)))
    return out


def _second_derivatives(H: TaylorTensor) -> Polynomial:
    """P[beta][i, k, j, l] = coefficient of x^beta in d_j d_l H_ik."""
    n = H.n
    table: Polynomial = {}
    for (i, k, alpha), value in H.coefficients.items():
        for j in range(n):
            for q in range(n):
                beta = list(alpha)
                factor = beta[j]
                beta[j] -= 1
                if factor == 0:
                    continue
                factor *= beta[q]
                beta[q] -= 1
                if factor == 0:
                    continue
                block = table.setdefault(tuple(beta), np.zeros((n, n, n, n)))
                block[i, k, j, q] += value * factor
                if i != k:
                    block[k, i, j, q] += value * factor
    return table


def algebraic_curvature(H: TaylorTensor) -> AlgebraicCurvature:
    """Algebraic Schouten tensor A and Weyl tensor Z as exact coefficient polynomials."""
    n = H.n
    eye = np.eye(n)
    A_poly: Polynomial = {}
    Z_poly: Polynomial = {}
    for beta, P in _second_derivatives(H).items():
        A = (
            np.einsum("mjim->ij", P)
            + np.einsum("immj->ij", P)
            - np.einsum("ijmm->ij", P)
            - np.einsum("mpmp->", P) / (n - 1) * eye
        )
        hessian = np.einsum("jlik->ijkl", P)
        Z = hessian - hessian.transpose(0, 1, 3, 2) - hessian.transpose(1, 0, 2, 3)
        Z = Z + hessian.transpose(1, 0, 3, 2)
        Z = Z + (
            np.einsum("jl,ik->ijkl", A, eye)
            - np.einsum("jk,il->ijkl", A, eye)
            - np.einsum("il,jk->ijkl", A, eye)
            + np.einsum("ik,jl->ijkl", A, eye)
        ) / (n - 2)
        A_poly[beta] = A
        Z_poly[beta] = Z
    max_abs = max((float(np.max(np.abs(z))) for z in Z_poly.values()), default=0.0)
    return AlgebraicCurvature(
        n=n,
        A=A_poly,
        Z=Z_poly,
        in_Z_set=max_abs <= TAU_Z,
        alpha0=H.alpha0,
        max_abs_Z=max_abs,
    )


def conformal_deformation(W: Dict[int, Dict[Tuple[int, ...], float]], n: int) -> TaylorTensor:
    """LW_ik = d_i W_k + d_k W_i - (2/n) div W delta_ik for polynomial W.

    ``W`` maps a component index to its monomial table {alpha: coefficient}.
    """
    table: Dict[CoefficientKey, float] = {}

    def add(i: int, k: int, alpha: Tuple[int, ...], value: float) -> None:
        if value == 0.0:
            return
        key = (min(i, k), max(i, k), alpha)
        table[key] = table.get(key, 0.0) + value

    def derivative(
        poly: Dict[Tuple[int, ...], float], axis: int
    ) -> Iterable[Tuple[Tuple[int, ...], float]]:
        for alpha, value in poly.items():
            if alpha[axis] == 0:
                continue
            lowered = list(alpha)
            lowered[axis] -= 1
            yield tuple(lowered), value * alpha[axis]

    for k, poly in W.items():
        for i in range(n):
            for alpha, value in derivative(poly, i):
                add(i, k, alpha, value if i != k else 2.0 * value)
        for alpha, value in derivative(poly, k):
            for i in range(n):
                add(i, i, alpha, -2.0 / n * value)
    cleaned = {key: value for key, value in table.items() if abs(value) > 1e-15}
    return TaylorTensor(n, cleaned)


def _axis_stencils(order: int, near_boundary: bool) -> np.ndarray:
    if near_boundary:
        return np.arange(order + 2, dtype=float)
    half = order // 2
    return np.arange(-half, half + 1, dtype=float)


def metric_derivatives(
    model: MetricModel, points: np.ndarray, order: int = 4, step: float | None = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """g, dg[..., m, i, j] and ddg[..., m, p, i, j] by finite differences.

    Tangential axes use central stencils; the normal axis switches to forward
    stencils when a central one would cross x_n = 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = model.n
    hs = model.delta_max / 64.0 if step is None else step
    g = model.metric(pts)
    dg = np.zeros(pts.shape[:-1] + (n, n, n))
    ddg = np.zeros(pts.shape[:-1] + (n, n, n, n))
    reach = order // 2
    near = pts[:, -1] < reach * hs * (1.0 + 1e-12)
    for mask, forward in ((~near, False), (near, True)):
        if not np.any(mask):
            continue
        sub = pts[mask]
        stencils = []
        for axis in range(n):
            offsets = _axis_stencils(order, forward and axis == n - 1)
            stencils.append((offsets, fd_weights(offsets, 1), fd_weights(offsets, 2)))
        first = np.zeros(sub.shape[:-1] + (n, n, n))
        second = np.zeros(sub.shape[:-1] + (n, n, n, n))
        for axis, (offsets, w1, w2) in enumerate(stencils):
            for o, a1, a2 in zip(offsets, w1, w2):
                shifted = sub.copy()
                shifted[:, axis] += o * hs
                sample = model.metric(shifted)
                first[:, axis] += a1 * sample / hs
                second[:, axis, axis] += a2 * sample / hs**2
        for m in range(n):
            for p in range(m + 1, n):
                om, wm, _ = stencils[m]
                op, wp, _ = stencils[p]
                mixed = np.zeros(sub.shape[:-1] + (n, n))
                for o1, a1 in zip(om, wm):
                    if a1 == 0.0:
                        continue
                    for o2, a2 in zip(op, wp):
                        if a2 == 0.0:
                            continue
                        shifted = sub.copy()
                        shifted[:, m] += o1 * hs
                        shifted[:, p] += o2 * hs
                        mixed += a1 * a2 * model.metric(shifted)
                second[:, m, p] = second[:, p, m] = mixed / hs**2
        dg[mask] = first
        ddg[mask] = second
    return g, dg, ddg


def ricci_scalar(g: np.ndarray, dg: np.ndarray, ddg: np.ndarray) -> np.ndarray:
    """Scalar curvature from g and its first and second partial derivatives."""
    g_inv = np.linalg.inv(g)
    # gamma[k, i, j] = Gamma^k_ij
    lowered = 0.5 * (dg + np.einsum("...jil->...ijl", dg) - np.einsum("...lij->...ijl", dg))
    gamma = np.einsum("...kl,...ijl->...kij", g_inv, lowered)
    d_g_inv = -np.einsum("...ka,...mab,...bl->...mkl", g_inv, dg, g_inv)
    d_lowered = 0.5 * (
        ddg
        + np.einsum("...mjil->...mijl", ddg)
        - np.einsum("...mlij->...mijl", ddg)
    )
    d_gamma = np.einsum("...mkl,...ijl->...mkij", d_g_inv, lowered) + np.einsum(
        "...kl,...mijl->...mkij", g_inv, d_lowered
    )
    ricci = (
        np.einsum("...kkij->...ij", d_gamma)
        - np.einsum("...jkik->...ij", d_gamma)
        + np.einsum("...kkl,...lij->...ij", gamma, gamma)
        - np.einsum("...kjl,...lik->...ij", gamma, gamma)
    )
    return np.einsum("...ij,...ij->...", g_inv, ricci)


def scalar_curvature(chart: MetricModel, x: Sequence[float], order: int = 4) -> float:
    """R_g(x) from Christoffel symbols of finite-difference metric derivatives."""
    point = np.asarray(x, dtype=float)[None, :]
    if point[0, -1] < 0.0 or np.linalg.norm(point) >= chart.delta_max:
        raise StencilOutOfDomain(
            "geometry.scalar_curvature", f"x={point[0].tolist()} outside chart"
        )
    if isinstance(chart, MetricChart) and chart.is_flat:
        return 0.0
    g, dg, ddg = metric_derivatives(chart, point, order=order)
    return float(ricci_scalar(g, dg, ddg)[0])


@dataclass(slots=True)
class MetricSamples:
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det: np.ndarray
    R: np.ndarray | None


def metric_samples(
    chart: MetricChart, points: np.ndarray, curvature_order: int | None = 2, chunk: int = 4096
) -> MetricSamples:
    """Batched g, g^-1, sqrt(det g) and (optionally) R at arbitrary half-space points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    n = chart.n
    if chart.is_flat:
        eye = np.broadcast_to(np.eye(n), (m, n, n)).copy()
        R_flat = None if curvature_order is None else np.zeros(m)
        return MetricSamples(eye, eye.copy(), np.ones(m), R_flat)
    h = chart.h(pts)
    g = matrix_exp_sym(h)
    g_inv = matrix_exp_sym(-h)
    sqrt_det = np.exp(0.5 * np.trace(h, axis1=-2, axis2=-1))
    R: np.ndarray | None = None
    if curvature_order is not None:
        R = np.zeros(m)
        hs = chart.delta_max / 64.0
        active = np.flatnonzero(np.linalg.norm(pts, axis=-1) < chart.support_radius + 3 * hs)
        for start in range(0, active.size, chunk):
            index = active[start : start + chunk]
            g_c, dg_c, ddg_c = metric_derivatives(chart, pts[index], order=curvature_order)
            R[index] = ricci_scalar(g_c, dg_c, ddg_c)
    return MetricSamples(g, g_inv, sqrt_det, R)


def boundary_mean_curvature(chart: MetricChart, points: np.ndarray) -> np.ndarray:
    """Averaged mean curvature -(1/(2(n-1))) g^ab d_n g_ab = -(1/(2(n-1))) d_n tr h on x_n = 0."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dh = chart.dh(pts)
    return -np.trace(dh[..., -1], axis1=-2, axis2=-1) / (2.0 * (chart.n - 1))


@dataclass(slots=True)
class CurvatureData:
    pi0: np.ndarray
    pi_norm_sq: float
    mean_curvature0: float
    identity_defect: float
    A: Polynomial
    Z: Polynomial
    in_Z_set: bool
    alpha0: int | None
    umbilic: bool
    umbilic_measure: float
    H: TaylorTensor
    R_sampler: Callable[[np.ndarray], float]

    def summary(self) -> Dict[str, Any]:
        return {
            "pi0": self.pi0,
            "pi_norm_sq": self.pi_norm_sq,
            "pi_norm_convention": "frobenius",
            "mean_curvature0": self.mean_curvature0,
            "identity_defect": self.identity_defect,
            "in_Z_set": self.in_Z_set,
            "alpha0": self.alpha0 if self.alpha0 is not None else "none",
            "umbilic": self.umbilic,
            "umbilic_measure": self.umbilic_measure,
            "taylor_coefficients": self.H.to_dict(),
        }


def curvature_data(chart: MetricChart) -> CurvatureData:
    H = taylor_coefficients(chart)
    form = second_fundamental_form(chart, H)
    algebra = algebraic_curvature(H)
    umbilic, measure = classify_point(form)
    return CurvatureData(
        pi0=form.pi0,
        pi_norm_sq=form.pi_norm_sq,
        mean_curvature0=form.mean_curvature0,
        identity_defect=form.identity_defect,
        A=algebra.A,
        Z=algebra.Z,
        in_Z_set=algebra.in_Z_set,
        alpha0=algebra.alpha0,
        umbilic=umbilic,
        umbilic_measure=measure,
        H=H,
        R_sampler=lambda x: scalar_curvature(chart, x),
    )
