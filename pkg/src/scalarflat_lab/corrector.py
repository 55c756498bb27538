"""Weighted conformal-Killing corrector field V and the perturbation psi."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .artifacts import LDJSONLogger
from .bubble import DEFAULT_CUTOFF, BubbleParams, bubble_eval, bubble_hessian, cutoff_eval
from .exceptions import BoundViolation, GridTooCoarse, ValidationError
from .geometry import TaylorTensor
from .grid import GridField, HalfBallGrid
from .linalg import axis_operator, difference_matrices, iteration_cap, pcg
from .utils import make_rng

logger = logging.getLogger(__name__)

PsiSampler = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(slots=True)
class _System:
    """Stacked forward/backward deformation operator restricted to free unknowns."""

    B: sp.csr_matrix
    weights: np.ndarray
    data: np.ndarray
    free: np.ndarray
    diagonal: np.ndarray

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.B.T @ (self.weights * (self.B @ x)))

    def rhs(self) -> np.ndarray:
        return np.asarray(self.B.T @ (self.weights * self.data))

    def functional(self, x: np.ndarray) -> float:
        misfit = self.B @ x - self.data
        return 0.5 * float(np.sum(self.weights * misfit * misfit))


@dataclass(slots=True)
class CorrectorSolution:
    grid: HalfBallGrid
    params: BubbleParams
    H: TaylorTensor
    V: GridField
    S: GridField
    T: GridField
    psi: GridField
    residual_norm: float
    iterations: int
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    _system: _System | None = field(default=None, repr=False)
    _x: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> Dict[str, Any]:
        return {
            "grid": self.grid.describe(),
            "eps": self.params.eps,
            "delta": self.params.delta,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            **self.diagnostics,
        }


def _pairs(n: int) -> List[Tuple[int, int]]:
    return [(i, k) for i in range(n) for k in range(i, n)]


def _assemble(
    H: TaylorTensor, p: BubbleParams, grid: HalfBallGrid
) -> Tuple[_System, np.ndarray, np.ndarray]:
    n = p.n
    shape = grid.shape
    nodes = grid.size
    mesh = grid.mesh().reshape(nodes, n)
    radius = np.linalg.norm(mesh, axis=-1)

    y = mesh.copy()
    y[:, -1] += p.eps
    weight = p.eps**n * np.linalg.norm(y, axis=-1) ** (-2 * n) * grid.volume_weights().ravel()
    eta, _ = cutoff_eval(DEFAULT_CUTOFF, p.delta, mesh)
    target = eta[:, None, None] * H.evaluate(mesh)

    forward: List[sp.csr_matrix] = []
    backward: List[sp.csr_matrix] = []
    for axis, coords in enumerate(grid.coords):
        f1, b1 = difference_matrices(coords)
        forward.append(axis_operator(f1, axis, shape))
        backward.append(axis_operator(b1, axis, shape))

    pairs = _pairs(n)
    multiplicity = np.array([1.0 if i == k else 2.0 for i, k in pairs])
    stacked = []
    for D in (forward, backward):
        rows = []
        for i, k in pairs:
            blocks = []
            for c in range(n):
                block = sp.csr_matrix((nodes, nodes))
                if c == k:
                    block = block + D[i]
                if c == i:
                    block = block + D[k]
                if i == k:
                    block = block - (2.0 / n) * D[c]
                blocks.append(block)
            rows.append(blocks)
        stacked.append(sp.bmat(rows, format="csr"))
    B_full = sp.vstack(stacked, format="csr")

    pair_weights = (0.5 * multiplicity[:, None] * weight[None, :]).ravel()
    weights = np.concatenate([pair_weights, pair_weights])
    data_block = np.stack([target[:, i, k] for i, k in pairs]).ravel()
    data = np.concatenate([data_block, data_block])

    fixed_outer = radius >= grid.radius * (1.0 - 1e-12)
    free = np.ones((n, nodes), dtype=bool)
    free[:, fixed_outer] = False
    boundary_layer = np.isclose(mesh[:, -1], 0.0)
    free[n - 1, boundary_layer] = False
    free_index = np.flatnonzero(free.ravel())

    B = B_full[:, free_index]
    diagonal = np.asarray(B.multiply(B).T @ weights).ravel()
    system = _System(B=B, weights=weights, data=data, free=free_index, diagonal=diagonal)
    return system, target.reshape(shape + (n, n)), mesh


def _bound_profile(H: TaylorTensor, p: BubbleParams, mesh: np.ndarray) -> np.ndarray:
    radius = p.eps + np.linalg.norm(mesh, axis=-1)
    scale = np.zeros_like(radius)
    for (i, k, alpha), value in H.coefficients.items():
        scale += (1.0 if i == k else 2.0) * abs(value) * radius ** (sum(alpha) + 1)
    return scale


def psi_values(
    p: BubbleParams, grid: HalfBallGrid, V: np.ndarray, grad_V: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """psi = d_l v V_l + ((n-2)/(2n)) v div V at the nodes, with v alongside."""
    mesh = grid.mesh()
    v, grad_v = bubble_eval(p, mesh)
    div = np.trace(grad_V, axis1=-2, axis2=-1)
    psi = np.einsum("...l,...l->...", grad_v, V) + (p.n - 2) / (2.0 * p.n) * v * div
    return psi, v


def solve_corrector(
    H: TaylorTensor,
    p: BubbleParams,
    grid: HalfBallGrid,
    tol: float = 1e-8,
    max_iter: int | None = None,
    stream: LDJSONLogger | None = None,
) -> CorrectorSolution:
    where = "corrector.solve_corrector"
    if grid.n != p.n or H.n != p.n:
        raise ValidationError(where, "grid, bubble and Taylor tensor dimensions differ")
    if grid.radius < 2.0 * p.delta * (1.0 - 1e-12):
        raise ValidationError(
            where, f"grid radius {grid.radius:g} must cover 2*delta={2 * p.delta:g}"
        )
    if tol <= 0.0:
        raise ValidationError(where, "tol must be positive")
    if grid.central_spacing > p.eps:
        raise GridTooCoarse(
            where,
            f"central spacing {grid.central_spacing:g} does not resolve eps={p.eps:g}",
            {"central_spacing": grid.central_spacing, "eps": p.eps},
        )

    system, target, mesh = _assemble(H, p, grid)
    n = p.n
    unknowns = system.free.size
    rhs = system.rhs()
    cap = iteration_cap(unknowns) if max_iter is None else max_iter

    def record(iteration: int, residual: float) -> None:
        if stream is not None:
            stream.append({"solver": "corrector", "iteration": iteration, "residual": residual})

    result = pcg(
        system.matvec,
        rhs,
        system.diagonal,
        tol=tol,
        max_iter=cap,
        where=where,
        callback=record,
        stopping="preconditioned",
    )
    rhs_norm = float(np.linalg.norm(rhs))
    residual = 0.0 if rhs_norm == 0.0 else result.residual

    full = np.zeros(n * grid.size)
    full[system.free] = result.x
    V = np.moveaxis(full.reshape((n,) + grid.shape), 0, -1)

    parts = np.gradient(V, *grid.coords, axis=tuple(range(n)), edge_order=2)
    grad_V = np.stack(parts, axis=-1)
    div = np.trace(grad_V, axis1=-2, axis2=-1)
    eye = np.eye(n)
    S = grad_V + np.swapaxes(grad_V, -1, -2) - (2.0 / n) * div[..., None, None] * eye
    H_nodes = H.evaluate(grid.mesh())
    T = H_nodes - S
    psi, v = psi_values(p, grid, V, grad_V)

    inside = grid.ball_mask()
    energy = system.functional(result.x)
    zero_energy = system.functional(np.zeros_like(result.x))
    profile = _bound_profile(H, p, grid.mesh())
    magnitude = np.linalg.norm(V, axis=-1)
    usable = inside & (profile > 0.0)
    growth = float(np.max(magnitude[usable] / profile[usable])) if np.any(usable) else 0.0
    boundary_grad = grad_V[..., 0, :-1, -1]
    scale = max(float(np.max(np.abs(grad_V))), 1e-300)
    diagnostics = {
        "unknowns": unknowns,
        "iteration_cap": cap,
        "stopping": "preconditioned",
        "functional": energy,
        "functional_at_zero": zero_energy,
        "decrease_ratio": energy / zero_energy if zero_energy > 0.0 else 0.0,
        "neumann_defect": float(np.max(np.abs(boundary_grad))) / scale if np.any(V) else 0.0,
        "trace_S_max": float(np.max(np.abs(np.trace(S, axis1=-2, axis2=-1)))),
        "growth_ratio_max": growth,
        "psi_over_v_max": float(np.max(np.abs(psi[inside]) / v[inside])),
        "outer_condition": "V = 0 for |x| >= grid radius (truncation surrogate)",
    }
    logger.info(
        "%s: eps=%g delta=%g unknowns=%d iterations=%d residual=%.3e",
        where, p.eps, p.delta, unknowns, result.iterations, residual,
    )
    return CorrectorSolution(
        grid=grid,
        params=p,
        H=H,
        V=GridField(grid, V, "V", gradient=grad_V),
        S=GridField(grid, S, "S"),
        T=GridField(grid, T, "T", meta={"target": target}),
        psi=GridField(grid, psi, "psi"),
        residual_norm=residual,
        iterations=result.iterations,
        diagnostics=diagnostics,
        _system=system,
        _x=result.x,
    )


def assemble_psi(sol: CorrectorSolution, p: BubbleParams) -> GridField:
    """psi on the grid; raises BoundViolation where |psi| > v/2."""
    grad_V = sol.V.gradient if sol.V.gradient is not None else sol.V.finite_gradient()
    psi, v = psi_values(p, sol.grid, sol.V.values, grad_V)
    inside = sol.grid.ball_mask()
    ratio = np.where(inside, np.abs(psi) / v, 0.0)
    worst = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    radius = float(np.linalg.norm(sol.grid.mesh()[worst]))
    if ratio[worst] > 0.5:
        raise BoundViolation(
            "corrector.assemble_psi",
            f"|psi|/v = {ratio[worst]:.3f} > 1/2 at |x| = {radius:.4g}; delta is too large",
            {"ratio": float(ratio[worst]), "radius": radius},
        )
    scale = p.eps + sol.grid.norms()
    bound = np.where(inside, np.abs(psi) / (v * scale), 0.0)
    meta = {"psi_over_v_max": float(ratio[worst]), "measured_C": float(np.max(bound))}
    return GridField(sol.grid, psi, "psi", meta=meta)


def psi_sampler(sol: CorrectorSolution, p: BubbleParams) -> PsiSampler:
    """psi and grad psi at arbitrary points from interpolated V, grad V and grad div V."""
    grid = sol.grid
    grad_V = sol.V.gradient if sol.V.gradient is not None else sol.V.finite_gradient()
    div = np.trace(grad_V, axis1=-2, axis2=-1)
    grad_div = np.stack(
        np.gradient(div, *grid.coords, axis=tuple(range(grid.n)), edge_order=2), axis=-1
    )
    axes = tuple(grid.coords)
    V_i = RegularGridInterpolator(axes, sol.V.values, bounds_error=False, fill_value=None)
    dV_i = RegularGridInterpolator(axes, grad_V, bounds_error=False, fill_value=None)
    ddiv_i = RegularGridInterpolator(axes, grad_div, bounds_error=False, fill_value=None)
    c = (p.n - 2) / (2.0 * p.n)
    lower = np.array([axis[0] for axis in grid.coords])
    upper = np.array([axis[-1] for axis in grid.coords])
    is_zero = not np.any(sol.V.values)

    def sample(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if is_zero:
            return np.zeros(pts.shape[0]), np.zeros(pts.shape)
        clipped = np.clip(pts, lower, upper)
        V = V_i(clipped)
        dV = dV_i(clipped)
        grad_divV = ddiv_i(clipped)
        divV = np.trace(dV, axis1=-2, axis2=-1)
        v, grad_v = bubble_eval(p, pts)
        hess_v = bubble_hessian(p, pts)
        psi = np.einsum("ml,ml->m", grad_v, V) + c * v * divV
        grad_psi = (
            np.einsum("mjl,ml->mj", hess_v, V)
            + np.einsum("ml,mlj->mj", grad_v, dV)
            + c * (grad_v * divV[:, None] + v[:, None] * grad_divV)
        )
        outside = np.linalg.norm(pts, axis=-1) >= grid.radius
        psi[outside] = 0.0
        grad_psi[outside] = 0.0
        return psi, grad_psi

    return sample


def optimality_check(
    sol: CorrectorSolution, trials: int = 20, seed: int | None = None, step: float = 1e-3
) -> Dict[str, Any]:
    """F(V* + sW) - F(V*) over random perturbations W, normalized by F(0)."""
    if sol._system is None or sol._x is None:
        raise ValidationError("corrector.optimality_check", "solution carries no assembled system")
    system = sol._system
    rng = make_rng(seed)
    base = system.functional(sol._x)
    scale = max(system.functional(np.zeros_like(sol._x)), 1e-300)
    x_scale = max(float(np.max(np.abs(sol._x))), 1.0)
    changes = []
    for _ in range(trials):
        direction = rng.normal(size=sol._x.shape)
        direction *= x_scale / max(float(np.max(np.abs(direction))), 1e-300)
        for sign in (1.0, -1.0):
            changes.append((system.functional(sol._x + sign * step * direction) - base) / scale)
    worst = float(min(changes))
    return {
        "trials": trials,
        "step": step,
        "min_relative_change": worst,
        "passed": worst >= -max(sol.residual_norm, 1e-12) * step,
    }


def calibrate_delta0(
    H: TaylorTensor,
    delta_max: float,
    eps_ratio: float = 0.25,
    points: int = 17,
    levels: int = 5,
    tol: float = 1e-8,
) -> Dict[str, Any]:
    """Largest dyadic delta <= delta_max/2 for which |psi| <= v/2 holds on the grid."""
    table: List[Dict[str, Any]] = []
    delta = 0.5 * delta_max
    for _ in range(levels):
        p = BubbleParams(H.n, eps_ratio * delta, delta)
        grid = HalfBallGrid(H.n, 2.0 * delta, points, eps=p.eps)
        sol = solve_corrector(H, p, grid, tol=tol)
        ratio = sol.diagnostics["psi_over_v_max"]
        table.append({"delta": delta, "psi_over_v_max": ratio})
        if ratio <= 0.5:
            return {"delta0": delta, "table": table}
        delta *= 0.5
    raise BoundViolation(
        "corrector.calibrate_delta0",
        f"|psi| <= v/2 fails down to delta={2 * delta:g}",
        {"table": table},
    )


def outer_radius_sensitivity(
    H: TaylorTensor, p: BubbleParams, points: int, factor: float = 1.5, tol: float = 1e-8
) -> Dict[str, Any]:
    """Change of V on |x| <= delta when the truncation radius grows from 2*delta by ``factor``."""
    base_grid = HalfBallGrid(p.n, 2.0 * p.delta, points, eps=p.eps)
    wide_points = points + 2 * int(round((factor - 1.0) * (points - 1) / 2.0))
    if wide_points % 2 == 0:
        wide_points += 1
    wide_grid = HalfBallGrid(p.n, factor * 2.0 * p.delta, wide_points, eps=p.eps)
    base = solve_corrector(H, p, base_grid, tol=tol)
    wide = solve_corrector(H, p, wide_grid, tol=tol)
    probe = base_grid.mesh()[base_grid.norms() <= p.delta]
    v_base = base.V.interpolate(probe)
    v_wide = wide.V.interpolate(probe)
    scale = max(float(np.max(np.abs(v_base))), 1e-300)
    return {
        "radii": [base_grid.radius, wide_grid.radius],
        "max_change": float(np.max(np.abs(v_base - v_wide))),
        "relative_change": float(np.max(np.abs(v_base - v_wide))) / scale,
    }
