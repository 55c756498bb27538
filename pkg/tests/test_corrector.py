from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from scalarflat_lab.artifacts import LDJSONLogger
from scalarflat_lab.bubble import BubbleParams
from scalarflat_lab.corrector import (
    _assemble,
    optimality_check,
    outer_radius_sensitivity,
    psi_sampler,
    solve_corrector,
)
from scalarflat_lab.exceptions import GridTooCoarse, ValidationError
from scalarflat_lab.geometry import (
    TaylorTensor,
    build_chart,
    conformal_deformation,
    curvature_data,
)
from scalarflat_lab.grid import HalfBallGrid
from scalarflat_lab.selftest import linear_chart


def _linear_tensor() -> TaylorTensor:
    return curvature_data(build_chart(linear_chart(4, [1.0, -1.0]))).H


def test_zero_data_gives_zero_corrector() -> None:
    params = BubbleParams(4, 0.05, 0.2)
    grid = HalfBallGrid(4, 0.4, 9, eps=params.eps)
    solution = solve_corrector(TaylorTensor(4, {}), params, grid)
    assert solution.residual_norm == 0.0
    assert solution.iterations == 0
    assert not np.any(solution.V.values)
    psi, grad_psi = psi_sampler(solution, params)(np.array([[0.01, 0.0, 0.0, 0.02]]))
    assert psi[0] == 0.0
    assert not np.any(grad_psi)


@pytest.mark.slow
def test_linear_chart_corrector_is_optimal(tmp_path: Path) -> None:
    params = BubbleParams(4, 0.05, 0.2)
    grid = HalfBallGrid(4, 0.4, 13, eps=params.eps)
    stream = LDJSONLogger(tmp_path / "convergence.ldjson")
    solution = solve_corrector(_linear_tensor(), params, grid, stream=stream)
    assert solution.residual_norm <= 1e-8
    assert solution.diagnostics["decrease_ratio"] < 1.0
    assert solution.diagnostics["trace_S_max"] < 1e-8
    assert optimality_check(solution, trials=10, seed=3)["passed"]
    lines = (tmp_path / "convergence.ldjson").read_text().splitlines()
    assert len(lines) == solution.iterations


def test_corrector_input_checks() -> None:
    params = BubbleParams(4, 0.05, 0.2)
    H = TaylorTensor(4, {})
    with pytest.raises(GridTooCoarse):
        solve_corrector(H, params, HalfBallGrid(4, 0.4, 5))
    with pytest.raises(ValidationError):
        solve_corrector(H, params, HalfBallGrid(4, 0.3, 13, eps=params.eps))
    with pytest.raises(ValidationError):
        solve_corrector(TaylorTensor(5, {}), params, HalfBallGrid(4, 0.4, 9, eps=params.eps))
    with pytest.raises(ValidationError):
        solve_corrector(H, params, HalfBallGrid(4, 0.4, 9, eps=params.eps), tol=0.0)


def test_outer_radius_sensitivity_without_data() -> None:
    params = BubbleParams(4, 0.05, 0.2)
    report = outer_radius_sensitivity(TaylorTensor(4, {}), params, 9)
    assert report["radii"] == pytest.approx([0.4, 0.6])
    assert report["max_change"] == 0.0
    assert report["relative_change"] == 0.0


def test_corrector_far_field_matches_direct_solve() -> None:
    params = BubbleParams(4, 0.05, 0.2)
    grid = HalfBallGrid(4, 0.4, 7, eps=params.eps)
    H = _linear_tensor()
    solution = solve_corrector(H, params, grid)
    system, _, mesh = _assemble(H, params, grid)
    normal = (system.B.T @ sp.diags(system.weights) @ system.B).tocsc()
    direct = np.zeros(4 * grid.size)
    direct[system.free] = spla.spsolve(normal, system.rhs())
    V_direct = np.moveaxis(direct.reshape((4,) + grid.shape), 0, -1)
    far = np.linalg.norm(mesh, axis=-1).reshape(grid.shape) >= params.delta
    scale = float(np.max(np.abs(V_direct[far])))
    assert scale > 0.0
    error = float(np.max(np.abs(solution.V.values[far] - V_direct[far])))
    assert error <= 1e-3 * scale
    assert solution.diagnostics["stopping"] == "preconditioned"


def test_deformation_data_is_absorbed_on_the_plateau() -> None:
    # W = (x_1 x_2, 0, 0, 0): tangential, so W_n = d_n W_a = 0 on the boundary
    params = BubbleParams(4, 0.05, 0.2)
    grid = HalfBallGrid(4, 0.4, 9, eps=params.eps)
    H = conformal_deformation({0: {(1, 1, 0, 0): 1.0}}, 4)
    solution = solve_corrector(H, params, grid)
    mesh = grid.mesh()
    shifted = mesh.copy()
    shifted[..., -1] += params.eps
    weight = np.linalg.norm(shifted, axis=-1) ** (-8) * grid.volume_weights()
    plateau = grid.norms() <= params.delta
    H_nodes = H.evaluate(mesh)
    T = solution.T.values
    misfit = np.sum(weight[plateau] * np.sum(T[plateau] ** 2, axis=(-2, -1)))
    size = np.sum(weight[plateau] * np.sum(H_nodes[plateau] ** 2, axis=(-2, -1)))
    assert size > 0.0
    assert np.sqrt(misfit / size) <= 0.15
    assert solution.diagnostics["decrease_ratio"] < 0.2
