"""Standard half-space bubble, the radial cutoff and the dimension constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy import integrate, special

from .exceptions import Divergent, DomainError, ValidationError

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-13


@dataclass(slots=True, frozen=True)
class BubbleParams:
    n: int
    eps: float
    delta: float

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValidationError("bubble.BubbleParams", f"dimension n={self.n} must be >= 3")
        if not (0.0 < 2.0 * self.eps <= self.delta * (1.0 + 1e-12)):
            raise ValidationError(
                "bubble.BubbleParams",
                f"need 0 < 2*eps <= delta (eps={self.eps}, delta={self.delta})",
            )

    @property
    def m(self) -> float:
        return 0.5 * (self.n - 2)


def _shifted(p: BubbleParams, x: np.ndarray, where: str) -> Tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(x, dtype=float)
    if pts.shape[-1] != p.n:
        raise ValidationError(where, f"points must have {p.n} coordinates")
    if np.any(pts[..., -1] < 0.0):
        raise DomainError(where, "bubble is defined on the closed half-space x_n >= 0")
    y = pts.copy()
    y[..., -1] += p.eps
    return y, np.linalg.norm(y, axis=-1)


def bubble_eval(p: BubbleParams, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Value eps^m |y|^(2-n) and gradient (2-n) eps^m |y|^(-n) y with y = x + eps e_n."""
    y, norm = _shifted(p, x, "bubble.bubble_eval")
    scale = p.eps**p.m
    value = scale * norm ** (2 - p.n)
    gradient = ((2 - p.n) * scale * norm ** (-p.n))[..., None] * y
    return value, gradient


def bubble_hessian(p: BubbleParams, x: np.ndarray) -> np.ndarray:
    y, norm = _shifted(p, x, "bubble.bubble_hessian")
    scale = (2 - p.n) * p.eps**p.m
    eye = np.eye(p.n)
    outer = y[..., :, None] * y[..., None, :]
    return scale * (
        (norm ** (-p.n))[..., None, None] * eye
        - p.n * (norm ** (-p.n - 2))[..., None, None] * outer
    )


def boundary_residual(p: BubbleParams, x_tangential: np.ndarray) -> np.ndarray:
    """d_n v + (n-2) v^(n/(n-2)) on x_n = 0, relative to (n-2) v^(n/(n-2))."""
    pts = np.atleast_2d(np.asarray(x_tangential, dtype=float))
    full = np.concatenate([pts, np.zeros(pts.shape[:-1] + (1,))], axis=-1)
    value, gradient = bubble_eval(p, full)
    nonlinear = (p.n - 2) * value ** (p.n / (p.n - 2))
    return (gradient[..., -1] + nonlinear) / nonlinear


def bound_ratios(p: BubbleParams, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ratios of v and |grad v| to eps^m (eps+|x|)^(2-n) and eps^m (eps+|x|)^(1-n)."""
    value, gradient = bubble_eval(p, x)
    radius = p.eps + np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    scale = p.eps**p.m
    return (
        value / (scale * radius ** (2 - p.n)),
        np.linalg.norm(gradient, axis=-1) / (scale * radius ** (1 - p.n)),
    )


def _bump(s: np.ndarray) -> np.ndarray:
    positive = s > 0.0
    return np.where(positive, np.exp(-1.0 / np.where(positive, s, 1.0)), 0.0)


@dataclass(slots=True, frozen=True)
class CutoffProfile:
    inner: float = 4.0 / 3.0
    outer: float = 5.0 / 3.0
    samples: int = 20001
    c_eta: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        if not (0.0 < self.inner < self.outer):
            raise ValidationError("bubble.CutoffProfile", "need 0 < inner < outer")
        band = np.linspace(self.inner, self.outer, self.samples)
        object.__setattr__(self, "c_eta", float(np.max(np.abs(self.derivative(band)))))

    def value(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        a = _bump(self.outer - t)
        b = _bump(t - self.inner)
        total = np.where(a + b > 0.0, a + b, 1.0)
        return np.where(t <= self.inner, 1.0, np.where(t >= self.outer, 0.0, a / total))

    def derivative(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = (t > self.inner) & (t < self.outer)
        s1 = np.where(inside, self.outer - t, 1.0)
        s2 = np.where(inside, t - self.inner, 1.0)
        a = np.exp(-1.0 / s1)
        b = np.exp(-1.0 / s2)
        slope = -a * b * (1.0 / s1**2 + 1.0 / s2**2) / (a + b) ** 2
        return np.where(inside, slope, 0.0)


DEFAULT_CUTOFF = CutoffProfile()


def cutoff_eval(
    profile: CutoffProfile, delta: float, x: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """eta_delta(x) = eta(|x|/delta) and its gradient."""
    pts = np.asarray(x, dtype=float)
    radius = np.linalg.norm(pts, axis=-1)
    t = radius / delta
    value = profile.value(t)
    safe = np.where(radius > 0.0, radius, 1.0)
    gradient = (profile.derivative(t) / delta / safe)[..., None] * pts
    return value, gradient


def omega(m: int) -> float:
    """Area of the unit sphere S^m."""
    return float(2.0 * math.pi ** ((m + 1) / 2.0) / special.gamma((m + 1) / 2.0))


def _half_line(integrand: Any) -> float:
    def mapped(t: float) -> float:
        r = t / (1.0 - t)
        return float(integrand(r)) / (1.0 - t) ** 2

    value, _ = integrate.quad(mapped, 0.0, 1.0, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400)
    return float(value)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


@dataclass(slots=True)
class DimensionConstants:
    n: int
    omega: List[float]
    A: float
    B: float
    D: float | None
    Q_ball: float
    oracle_agreement: Dict[str, float | None] = field(default_factory=dict)

    def require_D(self) -> float:
        if self.D is None:
            raise Divergent("bubble.dimension_constants", f"D(n) diverges at n={self.n}")
        return self.D

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "omega": self.omega,
            "A": self.A,
            "B": self.B,
            "D": self.D if self.D is not None else "divergent",
            "Q_ball": self.Q_ball,
            "oracle_agreement": self.oracle_agreement,
        }


def closed_form_A(n: int) -> float:
    return omega(n - 2) * special.gamma((n - 1) / 2.0) ** 2 / (2.0 * special.gamma(n - 1))


def closed_form_B(n: int) -> float | None:
    if n < 5:
        return None
    return omega(n - 1) * float(special.betainc(n, n - 4, 0.5) * special.beta(n, n - 4))


def closed_form_D(n: int) -> float:
    if n <= 3:
        raise Divergent("bubble.dimension_constants", f"D(n) diverges at n={n}")
    return omega(n - 2) / (2.0 * (n - 1)) * 0.5 * float(special.beta((n + 1) / 2.0, (n - 3) / 2.0))


@lru_cache(maxsize=None)
def dimension_constants(n: int) -> DimensionConstants:
    if n < 3:
        raise ValidationError("bubble.dimension_constants", f"dimension n={n} must be >= 3")
    quad_A = omega(n - 2) * _half_line(lambda r: r ** (n - 2) / (1.0 + r * r) ** (n - 1))
    quad_B_raw, _ = integrate.quad(
        lambda r: r ** (n - 1) / (1.0 + r) ** (2 * n - 4),
        0.0,
        1.0,
        epsabs=QUAD_EPSABS,
        epsrel=QUAD_EPSREL,
    )
    quad_B = omega(n - 1) * float(quad_B_raw)
    exact_A = closed_form_A(n)
    exact_B = closed_form_B(n)
    agreement: Dict[str, float | None] = {
        "A": _relative(quad_A, exact_A),
        "B": None if exact_B is None else _relative(quad_B, exact_B),
    }
    D: float | None = None
    if n > 3:
        quad_D = omega(n - 2) / (2.0 * (n - 1)) * _half_line(
            lambda r: r**n / (1.0 + r * r) ** (n - 1)
        )
        exact_D = closed_form_D(n)
        agreement["D"] = _relative(quad_D, exact_D)
        D = exact_D
    else:
        agreement["D"] = None
    A = exact_A
    return DimensionConstants(
        n=n,
        omega=[omega(m) for m in range(1, n + 1)],
        A=A,
        B=exact_B if exact_B is not None else quad_B,
        D=D,
        Q_ball=4.0 * (n - 1) * A ** (1.0 / (n - 1)),
        oracle_agreement=agreement,
    )


def truncated_boundary_mass(n: int, eps: float, radius: float) -> float:
    """Closed form of the boundary integral of v_eps^(2(n-1)/(n-2)) over |x'| <= radius."""
    s2 = (radius / eps) ** 2
    t = s2 / (1.0 + s2)
    half = 0.5 * (n - 1)
    return omega(n - 2) * 0.5 * float(special.betainc(half, half, t) * special.beta(half, half))


def radial_moment(n: int, k: int, eps: float, delta: float, boundary: bool = False) -> float:
    """eps^(2k) times the integral of (1+r)^(2k-2n+2) r^(n-1) over [0, delta/eps].

    The boundary variant uses omega_(n-2) and r^(n-2). The result sizes the
    Taylor-order-k gain term: bounded in eps when 2k < n-2, logarithmic when 2k = n-2.
    """
    power = n - 2 if boundary else n - 1
    area = omega(n - 2) if boundary else omega(n - 1)
    value, _ = integrate.quad(
        lambda r: (1.0 + r) ** (2 * k - 2 * n + 2) * r**power,
        0.0,
        delta / eps,
        epsabs=QUAD_EPSABS,
        epsrel=1e-10,
        limit=400,
    )
    return area * eps ** (2 * k) * float(value)


def bubble_quotient(n: int, eps: float) -> float:
    """E(v_eps) / (boundary mass)^((n-2)/(n-1)) on the flat half-space by direct quadrature."""
    if eps <= 0.0:
        raise ValidationError("bubble.bubble_quotient", "eps must be positive")
    scale = eps ** (n - 2)

    def shell(theta: float) -> float:
        lower = eps / max(math.cos(theta), 1e-300)
        inner, _ = integrate.quad(
            lambda s: lower * (lower * s) ** (1 - n), 1.0, np.inf, epsabs=0.0, epsrel=QUAD_EPSREL
        )
        return math.sin(theta) ** (n - 2) * float(inner)

    polar, _ = integrate.quad(shell, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=1e-12, limit=200)
    gradient_energy = (n - 2) ** 2 * scale * omega(n - 2) * float(polar)

    def trace_density(s: float) -> float:
        rho = eps * s
        return eps * rho ** (n - 2) * eps ** (n - 1) / (rho * rho + eps * eps) ** (n - 1)

    mass, _ = integrate.quad(
        trace_density,
        0.0,
        np.inf,
        epsabs=0.0,
        epsrel=QUAD_EPSREL,
        limit=200,
    )
    E = 4.0 * (n - 1) / (n - 2) * gradient_energy
    return E / (omega(n - 2) * float(mass)) ** ((n - 2.0) / (n - 1.0))
