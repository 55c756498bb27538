"""Sparse stencil operators, finite-difference weights and preconditioned CG."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import GridTooCoarse, NonConvergence, ValidationError
from .grid import HalfBallGrid

logger = logging.getLogger(__name__)

MatVec = Callable[[np.ndarray], np.ndarray]


def fd_weights(offsets: Sequence[float], order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x0 + offsets_j) ~ f^(order)(x0).

    Solves the moment (Vandermonde) system; exact for polynomials of degree
    len(offsets) - 1.
    """
    nodes = np.asarray(offsets, dtype=float)
    m = nodes.size
    if order >= m:
        raise ValidationError("linalg.fd_weights", f"need more than {order} nodes")
    vandermonde = np.vander(nodes, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vandermonde, rhs)


def difference_matrices(coords: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Forward and backward one-sided first differences on a nonuniform axis.

    The last forward row and the first backward row fall back to the opposite
    one-sided difference so both operators are defined at every node.
    """
    x = np.asarray(coords, dtype=float)
    m = x.size
    step = np.diff(x)
    inv = 1.0 / step
    forward = sp.lil_matrix((m, m))
    backward = sp.lil_matrix((m, m))
    for j in range(m - 1):
        forward[j, j] = -inv[j]
        forward[j, j + 1] = inv[j]
    forward[m - 1, m - 2] = -inv[m - 2]
    forward[m - 1, m - 1] = inv[m - 2]
    for j in range(1, m):
        backward[j, j - 1] = -inv[j - 1]
        backward[j, j] = inv[j - 1]
    backward[0, 0] = -inv[0]
    backward[0, 1] = inv[0]
    return forward.tocsr(), backward.tocsr()


def axis_operator(matrix: sp.spmatrix, axis: int, shape: Sequence[int]) -> sp.csr_matrix:
    """Lift a 1D operator to act along ``axis`` of a row-major flattened array."""
    left = int(np.prod(shape[:axis])) if axis > 0 else 1
    right = int(np.prod(shape[axis + 1 :])) if axis < len(shape) - 1 else 1
    return sp.kron(
        sp.kron(sp.identity(left, format="csr"), matrix, format="csr"),
        sp.identity(right, format="csr"),
        format="csr",
    )


@dataclass(slots=True)
class PCGResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: List[float] = field(default_factory=list)


STOPPING_NORMS = ("residual", "preconditioned")


def pcg(
    matvec: MatVec,
    rhs: np.ndarray,
    diagonal: np.ndarray,
    *,
    tol: float,
    max_iter: int,
    where: str,
    x0: np.ndarray | None = None,
    callback: Callable[[int, float], None] | None = None,
    stopping: str = "residual",
) -> PCGResult:
    """Jacobi-preconditioned conjugate gradients on a symmetric operator.

    ``stopping="residual"`` measures |r| / |b|; ``"preconditioned"`` measures
    sqrt(r.D^-1 r / b.D^-1 b), which weighs every row by its own diagonal.

    The residual is recomputed from scratch every 10 iterations. Raises
    ``GridTooCoarse`` when a search direction has non-positive curvature and
    ``NonConvergence`` at the cap; the partial iterate is kept on
    ``exc.partial`` and only its norm goes into ``details``.
    """
    if stopping not in STOPPING_NORMS:
        raise ValidationError(where, f"unknown stopping norm {stopping!r}")
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    inv_diag = np.where(diagonal > 0.0, 1.0 / np.where(diagonal > 0.0, diagonal, 1.0), 1.0)
    if stopping == "preconditioned":
        b_size = math.sqrt(max(float(b @ (inv_diag * b)), 0.0))
    else:
        b_size = float(np.linalg.norm(b))
    if b_size == 0.0 and not np.any(x):
        return PCGResult(x=x, iterations=0, residual=0.0)
    scale = b_size if b_size > 0.0 else 1.0

    def measure(r: np.ndarray, z: np.ndarray) -> float:
        if stopping == "preconditioned":
            return math.sqrt(max(float(r @ z), 0.0)) / scale
        return float(np.linalg.norm(r)) / scale

    r = b - matvec(x)
    z = inv_diag * r
    d = z.copy()
    rz = float(r @ z)
    history: List[float] = []
    residual = measure(r, z)
    iteration = 0
    while iteration < max_iter and residual > tol:
        q = matvec(d)
        curvature = float(d @ q)
        if curvature <= 0.0:
            raise GridTooCoarse(
                where,
                "discrete functional is not positive definite along a search direction",
                {"iteration": iteration, "curvature": curvature},
            )
        alpha = rz / curvature
        x += alpha * d
        if iteration % 10 == 9:
            r = b - matvec(x)
        else:
            r -= alpha * q
        z = inv_diag * r
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
        iteration += 1
        residual = measure(r, z)
        history.append(residual)
        if callback is not None:
            callback(iteration, residual)
        if iteration % 100 == 0:
            logger.debug("%s: pcg iteration %d residual %.3e", where, iteration, residual)

    r = b - matvec(x)
    residual = measure(r, inv_diag * r)
    if residual > tol:
        exc = NonConvergence(
            where,
            f"pcg stopped after {iteration} iterations at relative residual {residual:.3e}",
            {
                "iterations": iteration,
                "residual": residual,
                "stopping": stopping,
                "x_norm": float(np.linalg.norm(x)),
            },
        )
        exc.partial = x
        raise exc
    logger.info("%s: pcg converged in %d iterations (residual %.3e)", where, iteration, residual)
    return PCGResult(x=x, iterations=iteration, residual=residual, history=history)


def iteration_cap(unknowns: int) -> int:
    return max(50, int(10 * math.sqrt(max(unknowns, 1))))


def stiffness(
    grid: HalfBallGrid, coefficients: np.ndarray, potential: np.ndarray
) -> Tuple[sp.csr_matrix, List[Tuple[sp.csr_matrix, sp.csr_matrix]]]:
    """sum over +/- of 1/2 D_i^T diag(a_ij) D_j plus diag(potential) on a half-ball lattice.

    ``coefficients`` has shape (nodes, n, n) and already carries the node weights.
    """
    n = grid.n
    operators = []
    for axis, coords in enumerate(grid.coords):
        forward, backward = difference_matrices(coords)
        operators.append(
            (axis_operator(forward, axis, grid.shape), axis_operator(backward, axis, grid.shape))
        )
    K = sp.diags(potential).tocsr()
    for sign in (0, 1):
        for i in range(n):
            Di = operators[i][sign]
            for j in range(n):
                a = coefficients[:, i, j]
                if not np.any(a):
                    continue
                Dj = operators[j][sign]
                K = K + Di.T @ sp.diags(0.5 * a) @ Dj
    return K.tocsr(), operators
