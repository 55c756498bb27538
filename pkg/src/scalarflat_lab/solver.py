"""Constrained energy minimization for the boundary problem.

Two domains share the descent: the axisymmetric unit ball and a half-ball of a
metric chart. The unit ball is flat (R = 0) with boundary mean curvature
h = 1. Unknowns sit on cell centres r_i = (i + 1/2) dr,
theta_j = (j + 1/2) pi / Nt, with dr = 1/(Nr - 1/2) so the last radial node
lies on the sphere. The discrete energy is a staggered finite-volume form with
the azimuthal volume factor omega_(n-2) r^(n-1) sin(theta)^(n-2).

On a chart the unknowns are the nodes of a HalfBallGrid strictly inside the
grid radius; u = 0 on and beyond that sphere and the natural boundary
condition of the energy holds on x_n = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve

from .artifacts import LDJSONLogger
from .bubble import omega
from .energy import BoundaryFunction
from .exceptions import (
    ConstraintDegenerate,
    NonConvergence,
    PositivityLost,
    ValidationError,
)
from .geometry import MetricChart, boundary_mean_curvature, metric_samples
from .grid import HalfBallGrid
from .linalg import stiffness

logger = logging.getLogger(__name__)

DOMAINS = ("unit_ball_axisymmetric", "half_ball_chart")
ARMIJO = 1e-4
POLISH_THRESHOLD = 1e-3
POLISH_STEPS = 20
MIN_STEP = 1e-14


def critical_exponent(n: int) -> float:
    return n / (n - 2.0)


def default_exponent(n: int) -> float:
    return critical_exponent(n) - 0.05


@dataclass(slots=True)
class BallGrid:
    n: int
    radial: int
    polar: int
    r: np.ndarray = field(init=False)
    theta: np.ndarray = field(init=False)
    dr: float = field(init=False)
    dtheta: float = field(init=False)

    def __post_init__(self) -> None:
        if self.radial < 4 or self.polar < 4:
            raise ValidationError("solver.BallGrid", "need at least 4 radial and 4 polar nodes")
        self.dr = 1.0 / (self.radial - 0.5)
        self.dtheta = math.pi / self.polar
        self.r = (np.arange(self.radial) + 0.5) * self.dr
        self.theta = (np.arange(self.polar) + 0.5) * self.dtheta

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.radial, self.polar)

    @property
    def size(self) -> int:
        return self.radial * self.polar

    def refined(self) -> "BallGrid":
        """Grid with half the radial and polar steps."""
        return BallGrid(self.n, 2 * self.radial, 2 * self.polar)

    def radial_lengths(self) -> np.ndarray:
        lengths = np.full(self.radial, self.dr)
        lengths[-1] = 0.5 * self.dr
        return lengths

    def polar_weights(self) -> np.ndarray:
        return np.sin(self.theta) ** (self.n - 2) * self.dtheta

    def cell_volumes(self) -> np.ndarray:
        radial = self.r ** (self.n - 1) * self.radial_lengths()
        return omega(self.n - 2) * radial[:, None] * self.polar_weights()[None, :]

    def boundary_areas(self) -> np.ndarray:
        return omega(self.n - 2) * self.polar_weights()

    def boundary_index(self) -> np.ndarray:
        return (self.radial - 1) * self.polar + np.arange(self.polar)

    def describe(self) -> Dict[str, Any]:
        return {"n": self.n, "radial": self.radial, "polar": self.polar, "dr": self.dr}


@dataclass(slots=True)
class _ChartLayout:
    """Free nodes of a half-ball lattice and the boundary layer among them."""

    free: np.ndarray
    boundary: np.ndarray
    points: np.ndarray

    @classmethod
    def of(cls, grid: HalfBallGrid) -> "_ChartLayout":
        mesh = grid.mesh().reshape(-1, grid.n)
        radius = np.linalg.norm(mesh, axis=-1)
        free = np.flatnonzero(radius < grid.radius * (1.0 - 1e-12))
        boundary = np.flatnonzero(mesh[free, -1] == 0.0)
        return cls(free, boundary, mesh[free[boundary]])


@dataclass(slots=True)
class SolverProblem:
    domain: str
    n: int
    f: BoundaryFunction
    p_exp: float
    grid: BallGrid | HalfBallGrid
    chart: MetricChart | None = None

    def validate(self) -> None:
        where = "solver.SolverProblem"
        if self.domain not in DOMAINS:
            raise ValidationError(where, f"domain must be one of {', '.join(DOMAINS)}")
        if self.domain == "half_ball_chart":
            if self.chart is None or not isinstance(self.grid, HalfBallGrid):
                raise ValidationError(
                    where, "half_ball_chart needs a metric chart and a HalfBallGrid"
                )
            if self.chart.n != self.n:
                raise ValidationError(where, "chart and problem dimensions differ")
            if self.f.is_ball_only:
                raise ValidationError(where, f"{self.f.spec.kind} f is defined on the ball only")
        elif not isinstance(self.grid, BallGrid):
            raise ValidationError(where, "unit_ball_axisymmetric needs a BallGrid")
        if self.n < 3 or self.grid.n != self.n or self.f.n != self.n:
            raise ValidationError(where, "problem, grid and boundary function dimensions differ")
        if not (1.0 < self.p_exp <= critical_exponent(self.n) * (1.0 + 1e-12)):
            raise ValidationError(
                where, f"p_exp={self.p_exp} must lie in (1, {critical_exponent(self.n):g}]"
            )
        self.boundary_f()

    @property
    def critical(self) -> bool:
        return abs(self.p_exp - critical_exponent(self.n)) <= 1e-12

    def boundary_f(self) -> np.ndarray:
        if isinstance(self.grid, HalfBallGrid):
            points = _ChartLayout.of(self.grid).points
            return np.asarray(self.f.sample(points[:, :-1]), dtype=float)
        return np.asarray(self.f.sample_polar(self.grid.theta), dtype=float)

    def refined(self) -> "SolverProblem":
        if isinstance(self.grid, HalfBallGrid):
            grid = HalfBallGrid(self.n, self.grid.radius, 2 * self.grid.points - 1, self.grid.eps)
            return replace(self, grid=grid)
        return replace(self, grid=self.grid.refined())


@dataclass(slots=True)
class SolverState:
    problem: SolverProblem
    u: np.ndarray
    normalized_u: np.ndarray
    residual_interior: float
    residual_boundary: float
    energy: float
    constraint: float
    achieved_mean_curvature: np.ndarray
    multiplier: float
    iterations: int
    converged: bool
    polished: bool = False
    history: List[Dict[str, float]] = field(default_factory=list)
    discretization: Any = field(default=None, repr=False)

    def summary(self) -> Dict[str, Any]:
        return {
            "domain": self.problem.domain,
            "grid": self.problem.grid.describe(),
            "p_exp": self.problem.p_exp,
            "critical": self.problem.critical,
            "residual_interior": self.residual_interior,
            "residual_boundary": self.residual_boundary,
            "energy": self.energy,
            "constraint": self.constraint,
            "multiplier": self.multiplier,
            "iterations": self.iterations,
            "converged": self.converged,
            "newton_polished": self.polished,
            "u_min": float(self.u.min()),
            "u_max": float(self.u.max()),
            "rescaling": "u = (E/(2(n-1)))^(1/(p-1)) * u_constrained",
        }


@dataclass(slots=True)
class _Discretization:
    """Quadratic energy u.M.u and boundary quadrature for the unknown vector."""

    grid: BallGrid | HalfBallGrid
    M: sp.csr_matrix
    boundary: np.ndarray
    areas: np.ndarray
    volumes: np.ndarray
    c: float

    @classmethod
    def build(cls, grid: BallGrid) -> "_Discretization":
        n = grid.n
        c = 4.0 * (n - 1) / (n - 2)
        w = omega(n - 2)
        polar = grid.polar_weights()

        def forward(m: int) -> sp.csr_matrix:
            return sp.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m)).tocsr()

        D_r = sp.kron(forward(grid.radial), sp.identity(grid.polar), format="csr")
        D_t = sp.kron(sp.identity(grid.radial), forward(grid.polar), format="csr")
        r_face = (np.arange(grid.radial - 1) + 1.0) * grid.dr
        a = w * (r_face ** (n - 1))[:, None] * polar[None, :] / grid.dr
        theta_face = (np.arange(grid.polar - 1) + 1.0) * grid.dtheta
        radial_volume = grid.r ** (n - 1) * grid.radial_lengths()
        b = (
            w
            * (radial_volume / grid.r**2)[:, None]
            * (np.sin(theta_face) ** (n - 2))[None, :]
            / grid.dtheta
        )
        boundary = grid.boundary_index()
        areas = grid.boundary_areas()
        surface = np.zeros(grid.size)
        surface[boundary] = 2.0 * (n - 1) * areas
        M = c * (D_r.T @ sp.diags(a.ravel()) @ D_r + D_t.T @ sp.diags(b.ravel()) @ D_t)
        M = (M + sp.diags(surface)).tocsr()
        return cls(grid, M, boundary, areas, grid.cell_volumes().ravel(), c)

    @property
    def size(self) -> int:
        return self.M.shape[0]

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float).ravel()

    def expand(self, u: np.ndarray) -> np.ndarray:
        return u.reshape(self.grid.shape)

    def mean_curvature(self, u_full: np.ndarray) -> np.ndarray:
        return _achieved_mean_curvature(self.grid, u_full)

    def energy(self, u: np.ndarray) -> float:
        return float(u @ (self.M @ u))

    def constraint(self, u: np.ndarray, f: np.ndarray, p: float) -> float:
        trace = u[self.boundary]
        return float(np.sum(self.areas * f * np.abs(trace) ** (p + 1.0)))

    def constraint_gradient(self, u: np.ndarray, f: np.ndarray, p: float) -> np.ndarray:
        out = np.zeros_like(u)
        trace = u[self.boundary]
        out[self.boundary] = (p + 1.0) * self.areas * f * np.abs(trace) ** (p - 1.0) * trace
        return out

    def constraint_hessian(self, u: np.ndarray, f: np.ndarray, p: float) -> sp.csr_matrix:
        diagonal = np.zeros_like(u)
        trace = u[self.boundary]
        diagonal[self.boundary] = (p + 1.0) * p * self.areas * f * np.abs(trace) ** (p - 1.0)
        return sp.diags(diagonal).tocsr()


@dataclass(slots=True)
class _ChartDiscretization(_Discretization):
    """Metric stiffness on the free nodes of a half-ball lattice; u = 0 at the outer sphere."""

    layout: _ChartLayout | None = None
    mean_h: np.ndarray | None = None
    boundary_g_inv: np.ndarray | None = None

    @classmethod
    def build_chart(cls, grid: HalfBallGrid, chart: MetricChart) -> "_ChartDiscretization":
        n = grid.n
        c = 4.0 * (n - 1) / (n - 2)
        layout = _ChartLayout.of(grid)
        mesh = grid.mesh().reshape(-1, n)
        samples = metric_samples(chart, mesh)
        R = samples.R if samples.R is not None else np.zeros(grid.size)
        weight = grid.volume_weights().ravel() * samples.sqrt_det
        K, _ = stiffness(grid, c * weight[:, None, None] * samples.g_inv, weight * R)
        free = layout.free
        boundary_samples = metric_samples(chart, layout.points, curvature_order=None)
        tangential = free[layout.boundary] // grid.shape[-1]
        areas = grid.boundary_weights().ravel()[tangential] * boundary_samples.sqrt_det
        mean_h = boundary_mean_curvature(chart, layout.points)
        surface = np.zeros(free.size)
        surface[layout.boundary] = 2.0 * (n - 1) * mean_h * areas
        M = (K[free][:, free] + sp.diags(surface)).tocsr()
        return cls(
            grid=grid,
            M=M,
            boundary=layout.boundary,
            areas=areas,
            volumes=weight[free],
            c=c,
            layout=layout,
            mean_h=mean_h,
            boundary_g_inv=boundary_samples.g_inv,
        )

    def restrict(self, u: np.ndarray) -> np.ndarray:
        values = np.asarray(u, dtype=float).ravel()
        if values.size == self.grid.size:
            return values[self.layout.free]
        return values

    def expand(self, u: np.ndarray) -> np.ndarray:
        full = np.zeros(self.grid.size)
        full[self.layout.free] = u
        return full.reshape(self.grid.shape)

    def mean_curvature(self, u_full: np.ndarray) -> np.ndarray:
        """u^(-n/(n-2)) ((2/(n-2)) d_nu u + h u) with nu the outward unit normal of x_n = 0."""
        n = self.grid.n
        parts = np.gradient(u_full, *self.grid.coords, axis=tuple(range(n)), edge_order=2)
        index = self.layout.free[self.layout.boundary]
        gradient = np.stack(parts, axis=-1).reshape(-1, n)[index]
        g_inv = self.boundary_g_inv
        d_nu = -np.einsum("mj,mj->m", g_inv[:, -1, :], gradient) / np.sqrt(g_inv[:, -1, -1])
        trace = u_full.ravel()[index]
        return trace ** (-n / (n - 2.0)) * ((2.0 / (n - 2.0)) * d_nu + self.mean_h * trace)


def _discretize(prob: SolverProblem) -> _Discretization:
    if isinstance(prob.grid, HalfBallGrid):
        return _ChartDiscretization.build_chart(prob.grid, prob.chart)
    return _Discretization.build(prob.grid)


def _normalize(
    disc: _Discretization, u: np.ndarray, f: np.ndarray, p: float, where: str
) -> np.ndarray:
    value = disc.constraint(u, f, p)
    if value <= 0.0:
        raise ConstraintDegenerate(
            where, f"int f |u|^(p+1) = {value:.3e} <= 0 at the iterate", {"constraint": value}
        )
    return u / value ** (1.0 / (p + 1.0))


def _tangent_residual(
    disc: _Discretization, u: np.ndarray, f: np.ndarray, p: float
) -> Tuple[float, float]:
    grad_E = 2.0 * (disc.M @ u)
    grad_C = disc.constraint_gradient(u, f, p)
    multiplier = float(grad_E @ grad_C) / float(grad_C @ grad_C)
    scale = max(float(np.linalg.norm(grad_E)), 1e-300)
    return float(np.linalg.norm(grad_E - multiplier * grad_C)) / scale, multiplier


def newton_polish(
    disc: _Discretization, u: np.ndarray, f: np.ndarray, p: float, tol: float
) -> Tuple[np.ndarray, float] | None:
    """Newton on the KKT system 2Mu = lambda grad C, C(u) = 1; None when it fails."""
    x = u.copy()
    _, multiplier = _tangent_residual(disc, x, f, p)
    previous = math.inf
    for _ in range(POLISH_STEPS):
        grad_C = disc.constraint_gradient(x, f, p)
        F = np.concatenate(
            [2.0 * (disc.M @ x) - multiplier * grad_C, [disc.constraint(x, f, p) - 1.0]]
        )
        size = float(np.linalg.norm(F))
        if size > previous:
            return None
        previous = size
        residual, _ = _tangent_residual(disc, x, f, p)
        if residual <= tol and abs(F[-1]) <= 1e-12:
            return x, multiplier
        column = sp.csr_matrix(grad_C[:, None])
        J = sp.bmat(
            [
                [2.0 * disc.M - multiplier * disc.constraint_hessian(x, f, p), -column],
                [column.T, None],
            ],
            format="csc",
        )
        step = spsolve(J, -F)
        x = x + step[:-1]
        multiplier += float(step[-1])
        if np.min(x) <= 0.0:
            return None
    residual, _ = _tangent_residual(disc, x, f, p)
    return (x, multiplier) if residual <= tol else None


def _finalize(
    prob: SolverProblem,
    disc: _Discretization,
    u: np.ndarray,
    multiplier: float,
    iterations: int,
    converged: bool,
    polished: bool,
    history: List[Dict[str, float]],
) -> SolverState:
    n = prob.n
    p = prob.p_exp
    f = prob.boundary_f()
    E = disc.energy(u)
    kappa = (E / (2.0 * (n - 1))) ** (1.0 / (p - 1.0))
    u_hat = kappa * u
    Mu = disc.M @ u_hat
    interior = np.ones(disc.size, dtype=bool)
    interior[disc.boundary] = False
    residual_interior = float(np.max(np.abs(Mu[interior]) / (disc.c * disc.volumes[interior])))
    trace = u_hat[disc.boundary]
    boundary_defect = Mu[disc.boundary] / (disc.c * disc.areas) - 0.5 * (n - 2) * f * trace**p
    state = SolverState(
        problem=prob,
        u=disc.expand(u_hat),
        normalized_u=disc.expand(u),
        residual_interior=residual_interior,
        residual_boundary=float(np.max(np.abs(boundary_defect))),
        energy=disc.energy(u_hat),
        constraint=disc.constraint(u_hat, f, p),
        achieved_mean_curvature=disc.mean_curvature(disc.expand(u_hat)),
        multiplier=multiplier,
        iterations=iterations,
        converged=converged,
        polished=polished,
        history=history,
        discretization=disc,
    )
    return state


def solve_subcritical(
    prob: SolverProblem,
    tol: float = 1e-8,
    max_iter: int = 500,
    u0: np.ndarray | None = None,
    stream: LDJSONLogger | None = None,
) -> SolverState:
    """Projected Sobolev-gradient descent with Armijo backtracking and a Newton polish."""
    where = "solver.solve_subcritical"
    prob.validate()
    if tol <= 0.0:
        raise ValidationError(where, "tol must be positive")
    disc = _discretize(prob)
    f = prob.boundary_f()
    p = prob.p_exp
    u = np.ones(disc.size) if u0 is None else disc.restrict(u0)
    if u.size != disc.size:
        raise ValidationError(where, "initial guess does not match the grid")
    if np.min(u) <= 0.0:
        raise PositivityLost(where, "initial guess must be positive")
    u = _normalize(disc, u, f, p, where)
    preconditioner = splu(disc.M.tocsc())

    history: List[Dict[str, float]] = []
    energy_value = disc.energy(u)
    step = 1.0
    for iteration in range(max_iter):
        residual, multiplier = _tangent_residual(disc, u, f, p)
        record = {
            "iteration": float(iteration),
            "energy": energy_value,
            "constraint": disc.constraint(u, f, p),
            "residual": residual,
            "step": step,
        }
        history.append(record)
        if stream is not None:
            stream.append({"solver": "solve", **record})
        if residual <= tol:
            logger.info("%s: converged after %d iterations", where, iteration)
            return _finalize(prob, disc, u, multiplier, iteration, True, False, history)
        if residual <= POLISH_THRESHOLD:
            polished = newton_polish(disc, u, f, p, tol)
            if polished is not None:
                u_p, multiplier = polished
                logger.info("%s: newton polish converged at iteration %d", where, iteration)
                return _finalize(prob, disc, u_p, multiplier, iteration, True, True, history)

        grad_C = disc.constraint_gradient(u, f, p)
        lifted = preconditioner.solve(grad_C)
        mu = float(grad_C @ (2.0 * u)) / float(grad_C @ lifted)
        direction = 2.0 * u - mu * lifted
        decrease = float(direction @ (disc.M @ direction))
        if decrease <= 0.0:
            return _finalize(prob, disc, u, multiplier, iteration, True, False, history)

        step = min(1.0, 2.0 * step)
        positivity_failures = 0
        while True:
            trial = u - step * direction
            if np.min(trial) > 0.0:
                trial = _normalize(disc, trial, f, p, where)
                trial_energy = disc.energy(trial)
                if trial_energy <= energy_value - ARMIJO * step * decrease:
                    break
            else:
                positivity_failures += 1
            step *= 0.5
            if step < MIN_STEP:
                if positivity_failures > 0:
                    raise PositivityLost(
                        where,
                        "every trial step leaves the positive cone",
                        {
                            "iteration": iteration,
                            "residual": residual,
                            "u_min": float(np.min(u)),
                        },
                    )
                raise NonConvergence(
                    where,
                    f"line search stalled at iteration {iteration} (residual {residual:.3e})",
                    {"iterations": iteration, "residual": residual, "u_min": float(np.min(u))},
                )
        u = trial
        energy_value = trial_energy
        if iteration % 25 == 0:
            logger.debug(
                "%s: iteration %d energy %.12g residual %.3e",
                where,
                iteration,
                energy_value,
                residual,
            )

    residual, multiplier = _tangent_residual(disc, u, f, p)
    best = _finalize(prob, disc, u, multiplier, max_iter, False, False, history)
    raise NonConvergence(
        where,
        f"no convergence in {max_iter} iterations (residual {residual:.3e})",
        {"iterations": max_iter, "residual": residual, "state": best.summary()},
    )


def _normal_derivative(grid: BallGrid, u: np.ndarray) -> np.ndarray:
    """Second-order one-sided d_r u at r = 1."""
    return (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * grid.dr)


def _achieved_mean_curvature(grid: BallGrid, u: np.ndarray) -> np.ndarray:
    """h of u^(4/(n-2)) g on the sphere: u^(-n/(n-2)) ((2/(n-2)) u_nu + u)."""
    n = grid.n
    trace = u[-1]
    return trace ** (-n / (n - 2.0)) * ((2.0 / (n - 2.0)) * _normal_derivative(grid, u) + trace)


def axisymmetric_laplacian(grid: BallGrid, u: np.ndarray) -> np.ndarray:
    """Finite-difference Laplacian at the non-boundary nodes, using axis and origin reflections."""
    n = grid.n
    nr, nt = grid.shape
    padded = np.empty((nr + 1, nt + 2))
    padded[1:, 1:-1] = u
    padded[0, 1:-1] = u[0, ::-1]
    padded[:, 0] = padded[:, 1]
    padded[:, -1] = padded[:, -2]
    centre = padded[1:-1, 1:-1]
    r = grid.r[:-1, None]
    theta = grid.theta[None, :]
    u_rr = (padded[2:, 1:-1] - 2.0 * centre + padded[:-2, 1:-1]) / grid.dr**2
    u_r = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / (2.0 * grid.dr)
    u_tt = (padded[1:-1, 2:] - 2.0 * centre + padded[1:-1, :-2]) / grid.dtheta**2
    u_t = (padded[1:-1, 2:] - padded[1:-1, :-2]) / (2.0 * grid.dtheta)
    cot = np.cos(theta) / np.sin(theta)
    return u_rr + (n - 1) / r * u_r + (u_tt + (n - 2) * cot * u_t) / r**2


def _verify_on_chart(state: SolverState) -> Dict[str, Any]:
    """Boundary law and interior residual on nodes within half the grid radius."""
    prob = state.problem
    grid = prob.grid
    n = prob.n
    disc = state.discretization
    if not isinstance(disc, _ChartDiscretization):
        disc = _ChartDiscretization.build_chart(grid, prob.chart)
    u = disc.restrict(state.u)
    h_tilde = disc.mean_curvature(state.u)
    f = prob.boundary_f()
    trace = u[disc.boundary]
    law = f * trace ** (prob.p_exp - critical_exponent(n))
    inner = np.linalg.norm(disc.layout.points, axis=-1) <= 0.5 * grid.radius
    mesh = grid.mesh().reshape(-1, n)[disc.layout.free]
    interior = np.linalg.norm(mesh, axis=-1) <= 0.5 * grid.radius
    interior[disc.boundary] = False
    # -c Delta_g u + R u, which the metric u^(4/(n-2)) g turns into R~ u^((n+2)/(n-2))
    operator = (disc.M @ u) / disc.volumes
    R_tilde = operator[interior] * u[interior] ** (-(n + 2.0) / (n - 2.0))
    report: Dict[str, Any] = {
        "grid": grid.describe(),
        "dr": float(max(np.max(np.diff(axis)) for axis in grid.coords)),
        "R_tilde_max": float(np.max(np.abs(R_tilde))) if R_tilde.size else 0.0,
        "law_defect": float(np.max(np.abs(h_tilde[inner] - law[inner]))),
        "critical": prob.critical,
        "checked_radius": 0.5 * grid.radius,
    }
    if prob.critical:
        report["h_minus_f"] = float(np.max(np.abs(h_tilde[inner] - f[inner])))
    return report


def verify_conformal_law(state: SolverState) -> Dict[str, Any]:
    """R and h of the conformal metric recomputed from u by finite differences."""
    prob = state.problem
    if prob.domain == "half_ball_chart":
        return _verify_on_chart(state)
    grid = prob.grid
    n = prob.n
    u = state.u
    laplacian = axisymmetric_laplacian(grid, u)
    c = 4.0 * (n - 1) / (n - 2)
    R_tilde = -c * u[:-1] ** (-(n + 2.0) / (n - 2.0)) * laplacian
    h_tilde = _achieved_mean_curvature(grid, u)
    f = prob.boundary_f()
    trace = u[-1]
    law = f * trace ** (prob.p_exp - critical_exponent(n))
    report: Dict[str, Any] = {
        "grid": grid.describe(),
        "dr": grid.dr,
        "R_tilde_max": float(np.max(np.abs(R_tilde))),
        "law_defect": float(np.max(np.abs(h_tilde - law))),
        "critical": prob.critical,
    }
    nonzero = np.abs(f) > 1e-12
    if np.any(nonzero):
        measured_power = h_tilde[nonzero] / f[nonzero]
        expected_power = trace[nonzero] ** (prob.p_exp - critical_exponent(n))
        report["ratio_defect"] = float(np.max(np.abs(measured_power - expected_power)))
    if prob.critical:
        report["h_minus_f"] = float(np.max(np.abs(h_tilde - f)))
    return report


def observed_order(coarse: Dict[str, Any], fine: Dict[str, Any], key: str = "law_defect") -> float:
    """log(defect_coarse/defect_fine) / log(dr_coarse/dr_fine)."""
    dc = float(coarse[key])
    df = float(fine[key])
    if dc <= 0.0 or df <= 0.0:
        raise ValidationError("solver.observed_order", f"{key} must be positive on both grids")
    return math.log(dc / df) / math.log(float(coarse["dr"]) / float(fine["dr"]))


def continuation_to_critical(
    prob: SolverProblem,
    p_ladder: Sequence[float],
    tol: float = 1e-8,
    max_iter: int = 500,
    stream: LDJSONLogger | None = None,
) -> Tuple[List[SolverState], Dict[str, Any]]:
    """Warm-started solves along an increasing exponent ladder with a concentration flag."""
    where = "solver.continuation_to_critical"
    ladder = [float(p) for p in p_ladder]
    if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValidationError(where, "p_ladder must be non-empty and strictly increasing")
    states: List[SolverState] = []
    guess: np.ndarray | None = None
    for p in ladder:
        rung = replace(prob, p_exp=p)
        state = solve_subcritical(rung, tol=tol, max_iter=max_iter, u0=guess, stream=stream)
        states.append(state)
        guess = state.u
    maxima = [float(state.u.max()) for state in states]
    growth = [b / a for a, b in zip(maxima, maxima[1:])]
    summary = {
        "p": ladder,
        "max_u": maxima,
        "energy": [state.energy for state in states],
        "growth": growth,
        "concentration": any(g > 2.0 for g in growth),
    }
    return states, summary
