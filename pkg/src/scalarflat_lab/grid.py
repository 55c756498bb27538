"""Structured half-ball lattices, grid fields and polar quadrature rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq
from scipy.special import roots_jacobi, roots_legendre

from .exceptions import InterpolationOutOfDomain, ValidationError

Sampler = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _grading(radius: float, steps: int, target: float) -> float:
    """Return beta so that x(s) = radius*sinh(beta*s)/sinh(beta) has central step ~ target."""
    uniform = radius / steps
    if target >= uniform:
        return 0.0

    def mismatch(beta: float) -> float:
        return radius * beta / math.sinh(beta) / steps - target

    upper = 1.0
    while mismatch(upper) > 0.0:
        upper *= 2.0
        if upper > 200.0:
            raise ValidationError("grid.HalfBallGrid", "cannot grade axis to the requested step")
    return float(brentq(mismatch, 1e-9, upper, xtol=1e-12))


def _graded_axis(radius: float, s: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0.0:
        return radius * s
    return radius * np.sinh(beta * s) / math.sinh(beta)


def trapezoid_weights(coords: np.ndarray) -> np.ndarray:
    step = np.diff(coords)
    weights = np.zeros_like(coords)
    weights[:-1] += 0.5 * step
    weights[1:] += 0.5 * step
    return weights


@dataclass(slots=True)
class HalfBallGrid:
    """Tensor lattice over [-rho, rho]^(n-1) x [0, rho].

    Array axes 0..n-2 are tangential and axis n-1 is normal; index 0 on the
    normal axis is the boundary layer x_n = 0. With ``eps`` given, the axes are
    graded so the central step is about eps/2.
    """

    n: int
    radius: float
    points: int
    eps: float | None = None
    coords: List[np.ndarray] = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValidationError("grid.HalfBallGrid", f"dimension n={self.n} must be >= 3")
        if self.points < 5 or self.points % 2 == 0:
            raise ValidationError("grid.HalfBallGrid", "points per axis must be odd and >= 5")
        if self.radius <= 0.0:
            raise ValidationError("grid.HalfBallGrid", "radius must be positive")
        half = (self.points - 1) // 2
        target = 0.5 * self.eps if self.eps is not None else math.inf
        self.beta = _grading(self.radius, half, target)
        tangential = _graded_axis(self.radius, np.linspace(-1.0, 1.0, self.points), self.beta)
        tangential[half] = 0.0
        normal = _graded_axis(self.radius, np.linspace(0.0, 1.0, half + 1), self.beta)
        normal[0] = 0.0
        self.coords = [tangential.copy() for _ in range(self.n - 1)] + [normal]

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(axis.size for axis in self.coords)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def central_spacing(self) -> float:
        return float(self.coords[-1][1] - self.coords[-1][0])

    @property
    def spacing(self) -> np.ndarray:
        return np.array([float(np.min(np.diff(axis))) for axis in self.coords])

    def mesh(self) -> np.ndarray:
        """Node coordinates with shape ``shape + (n,)``."""
        grids = np.meshgrid(*self.coords, indexing="ij")
        return np.stack(grids, axis=-1)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.mesh(), axis=-1)

    def volume_weights(self) -> np.ndarray:
        weights = np.ones(self.shape)
        for axis, coords in enumerate(self.coords):
            shape = [1] * self.n
            shape[axis] = coords.size
            weights = weights * trapezoid_weights(coords).reshape(shape)
        return weights

    def boundary_weights(self) -> np.ndarray:
        weights = np.ones(self.shape[:-1])
        for axis, coords in enumerate(self.coords[:-1]):
            shape = [1] * (self.n - 1)
            shape[axis] = coords.size
            weights = weights * trapezoid_weights(coords).reshape(shape)
        return weights

    def ball_mask(self, radius: float | None = None) -> np.ndarray:
        limit = self.radius if radius is None else radius
        return self.norms() < limit

    def describe(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "radius": self.radius,
            "points": self.points,
            "shape": list(self.shape),
            "central_spacing": self.central_spacing,
            "grading_beta": self.beta,
        }


@dataclass(slots=True)
class GridField:
    """Values on a ``HalfBallGrid``; vector and tensor components sit on trailing axes.

    ``sampler`` (when present) evaluates the field and its gradient exactly at
    arbitrary points and takes precedence over interpolation.
    """

    grid: HalfBallGrid
    values: np.ndarray
    name: str = "field"
    gradient: np.ndarray | None = None
    sampler: Sampler | None = None
    compact: bool = True
    meta: Dict[str, Any] = field(default_factory=dict)

    def finite_gradient(self) -> np.ndarray:
        """Second-order finite-difference gradient, derivative index last."""
        axes = tuple(range(self.grid.n))
        parts = np.gradient(self.values, *self.grid.coords, axis=axes, edge_order=2)
        return np.stack(parts, axis=-1)

    def interpolator(self, method: str = "linear") -> RegularGridInterpolator:
        return RegularGridInterpolator(
            tuple(self.grid.coords), self.values, method=method, bounds_error=False, fill_value=None
        )

    def interpolate(self, points: np.ndarray, method: str = "linear") -> np.ndarray:
        pts = np.atleast_2d(points)
        lower = np.array([axis[0] for axis in self.grid.coords])
        upper = np.array([axis[-1] for axis in self.grid.coords])
        tol = 1e-12 * self.grid.radius
        if np.any(pts < lower - tol) or np.any(pts > upper + tol):
            raise InterpolationOutOfDomain(
                f"grid.{self.name}", "sample point outside the grid box"
            )
        return np.asarray(self.interpolator(method)(np.clip(pts, lower, upper)))

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self.sampler is not None:
            return self.sampler(points)
        gradient = self.gradient if self.gradient is not None else self.finite_gradient()
        gradient_field = RegularGridInterpolator(
            tuple(self.grid.coords), gradient, bounds_error=False, fill_value=None
        )
        return self.interpolate(points), np.asarray(gradient_field(np.atleast_2d(points)))


@lru_cache(maxsize=None)
def sphere_rule(m: int, nodes: int, azimuth: int) -> Tuple[np.ndarray, np.ndarray]:
    """Product rule on the unit sphere S^m embedded in R^(m+1); weights sum to its area."""
    if m == 1:
        phi = 2.0 * math.pi * (np.arange(azimuth) + 0.5) / azimuth
        points = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return points, np.full(azimuth, 2.0 * math.pi / azimuth)
    exponent = 0.5 * (m - 2)
    t, wt = roots_jacobi(nodes, exponent, exponent)
    sub_points, sub_weights = sphere_rule(m - 1, nodes, azimuth)
    radial = np.sqrt(1.0 - t**2)
    points = np.concatenate(
        [
            (radial[:, None, None] * sub_points[None, :, :]).reshape(-1, m),
            np.repeat(t, sub_points.shape[0])[:, None],
        ],
        axis=-1,
    )
    weights = (wt[:, None] * sub_weights[None, :]).reshape(-1)
    return points, weights


def gauss_panels(breaks: Sequence[float], order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(order)
    out_x: List[np.ndarray] = []
    out_w: List[np.ndarray] = []
    for left, right in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (right - left)
        out_x.append(left + half * (nodes + 1.0))
        out_w.append(half * weights)
    return np.concatenate(out_x), np.concatenate(out_w)


@dataclass(slots=True)
class HemisphereRule:
    """Quadrature on the upper unit hemisphere {|u| = 1, u_n >= 0}."""

    n: int
    polar_nodes: int = 24
    sphere_nodes: int = 6
    azimuth_nodes: int = 12
    directions: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        theta, w_theta = gauss_panels([0.0, 0.5 * math.pi], self.polar_nodes)
        sigma, w_sigma = sphere_rule(self.n - 2, self.sphere_nodes, self.azimuth_nodes)
        sin_t = np.sin(theta)
        tangential = sin_t[:, None, None] * sigma[None, :, :]
        normal = np.broadcast_to(np.cos(theta)[:, None, None], tangential.shape[:2] + (1,))
        self.directions = np.concatenate([tangential, normal], axis=-1).reshape(-1, self.n)
        self.weights = ((w_theta * sin_t ** (self.n - 2))[:, None] * w_sigma[None, :]).reshape(-1)


@dataclass(slots=True)
class PolarGrid:
    """Polar quadrature for half-ball integrals concentrated at scale eps.

    Radial Gauss-Legendre panels are geometric from eps/4 up to 4*delta/3, split
    in four across the cutoff band [4*delta/3, 5*delta/3] and geometric again out
    to ``outer``. Volume nodes are r*(sin(theta)*sigma, cos(theta)); boundary
    nodes are (r*sigma, 0).
    """

    n: int
    eps: float
    delta: float
    outer: float
    radial_order: int = 8
    polar_nodes: int = 24
    sphere_nodes: int = 6
    azimuth_nodes: int = 12
    radial_breaks: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if min(self.eps, self.delta, self.outer) <= 0.0:
            raise ValidationError("grid.PolarGrid", "eps, delta and outer must be positive")
        breaks = [0.0, 0.25 * self.eps, 0.5 * self.eps]
        r = self.eps
        inner = min(4.0 * self.delta / 3.0, self.outer)
        while r < inner:
            breaks.append(r)
            r *= 2.0
        breaks.append(inner)
        if self.outer > inner:
            band = min(5.0 * self.delta / 3.0, self.outer)
            breaks.extend(np.linspace(inner, band, 5)[1:].tolist())
            r = band * 1.5
            while r < self.outer:
                breaks.append(r)
                r *= 1.5
            if breaks[-1] < self.outer:
                breaks.append(self.outer)
        self.radial_breaks = np.unique(np.asarray(breaks))

    def coarsened(self) -> "PolarGrid":
        return PolarGrid(
            self.n,
            self.eps,
            self.delta,
            self.outer,
            radial_order=max(self.radial_order - 2, 2),
            polar_nodes=max(self.polar_nodes // 2, 4),
            sphere_nodes=max(self.sphere_nodes - 2, 2),
            azimuth_nodes=max(self.azimuth_nodes - 4, 4),
        )

    def radial(self) -> Tuple[np.ndarray, np.ndarray]:
        return gauss_panels(self.radial_breaks.tolist(), self.radial_order)

    def volume_nodes(self) -> Tuple[np.ndarray, np.ndarray]:
        r, w_r = self.radial()
        hemisphere = HemisphereRule(self.n, self.polar_nodes, self.sphere_nodes, self.azimuth_nodes)
        points = r[:, None, None] * hemisphere.directions[None, :, :]
        weights = (w_r * r ** (self.n - 1))[:, None] * hemisphere.weights[None, :]
        return points.reshape(-1, self.n), weights.reshape(-1)

    def boundary_nodes(self) -> Tuple[np.ndarray, np.ndarray]:
        r, w_r = self.radial()
        sigma, w_sigma = sphere_rule(self.n - 2, self.sphere_nodes, self.azimuth_nodes)
        tangential = r[:, None, None] * sigma[None, :, :]
        zeros = np.zeros(tangential.shape[:2] + (1,))
        points = np.concatenate([tangential, zeros], axis=-1).reshape(-1, self.n)
        weights = ((w_r * r ** (self.n - 2))[:, None] * w_sigma[None, :]).reshape(-1)
        return points, weights

    def outer_shell(self) -> np.ndarray:
        """Nodes of the outermost radial panel, used for support checks."""
        hemisphere = HemisphereRule(self.n, 4, 2, 4)
        return self.outer * hemisphere.directions
