import numpy as np
import pytest
import scipy.sparse as sp

from scalarflat_lab.exceptions import GridTooCoarse, NonConvergence, ValidationError
from scalarflat_lab.grid import HalfBallGrid, HemisphereRule, PolarGrid, gauss_panels
from scalarflat_lab.linalg import axis_operator, difference_matrices, fd_weights, pcg


def test_fd_weights_are_exact_on_polynomials() -> None:
    offsets = np.arange(-2, 3, dtype=float)
    second = fd_weights(offsets, 2)
    np.testing.assert_allclose(second, [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12], atol=1e-12)
    one_sided = fd_weights([0.0, 1.0, 2.0, 3.0], 1)
    cubic = np.array([0.0, 1.0, 8.0, 27.0])
    assert abs(float(one_sided @ cubic)) < 1e-12
    with pytest.raises(ValidationError):
        fd_weights([0.0, 1.0], 2)


def test_difference_matrices_on_graded_axis() -> None:
    coords = np.array([0.0, 0.1, 0.3, 0.7, 1.5])
    forward, backward = difference_matrices(coords)
    linear = 3.0 * coords + 1.0
    np.testing.assert_allclose(forward @ linear, 3.0)
    np.testing.assert_allclose(backward @ linear, 3.0)


def test_axis_operator_acts_along_one_axis() -> None:
    shape = (3, 4)
    forward, _ = difference_matrices(np.linspace(0.0, 1.0, 4))
    lifted = axis_operator(forward, 1, shape)
    field = np.add.outer(np.zeros(3), 6.0 * np.linspace(0.0, 1.0, 4))
    np.testing.assert_allclose((lifted @ field.ravel()).reshape(shape), 6.0)


def test_pcg_solves_spd_system() -> None:
    size = 40
    matrix = sp.diags([-1.0, 2.5, -1.0], [-1, 0, 1], shape=(size, size), format="csr")
    rhs = np.linspace(1.0, 2.0, size)
    records = []
    result = pcg(
        lambda x: matrix @ x,
        rhs,
        matrix.diagonal(),
        tol=1e-12,
        max_iter=200,
        where="test",
        callback=lambda it, res: records.append((it, res)),
    )
    np.testing.assert_allclose(matrix @ result.x, rhs, atol=1e-10)
    assert result.residual <= 1e-12
    assert records[-1][0] == result.iterations


def test_pcg_reports_indefinite_operator() -> None:
    matrix = sp.diags([1.0, -1.0], 0, format="csr")
    with pytest.raises(GridTooCoarse):
        pcg(lambda x: matrix @ x, np.ones(2), np.ones(2), tol=1e-12, max_iter=10, where="t")


def test_pcg_iteration_cap_keeps_partial_iterate() -> None:
    size = 50
    matrix = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(size, size), format="csr")
    with pytest.raises(NonConvergence) as info:
        pcg(
            lambda x: matrix @ x, np.ones(size), matrix.diagonal(),
            tol=1e-14, max_iter=3, where="t",
        )
    assert info.value.details["iterations"] == 3
    assert info.value.partial.shape == (size,)
    assert "x" not in info.value.details
    assert info.value.details["x_norm"] == pytest.approx(float(np.linalg.norm(info.value.partial)))


def test_pcg_preconditioned_stopping_norm() -> None:
    # diagonal spans twelve decades, like the corrector weights near and far from the pole
    size = 60
    scales = np.logspace(0.0, -12.0, size)
    base = sp.diags([-1.0, 2.05, -1.0], [-1, 0, 1], shape=(size, size), format="csr")
    root = sp.diags(np.sqrt(scales))
    matrix = (root @ base @ root).tocsr()
    exact = np.ones(size)
    rhs = matrix @ exact
    plain = pcg(
        lambda x: matrix @ x, rhs, matrix.diagonal(), tol=1e-8, max_iter=500, where="t"
    )
    weighted = pcg(
        lambda x: matrix @ x, rhs, matrix.diagonal(),
        tol=1e-8, max_iter=500, where="t", stopping="preconditioned",
    )
    inv = 1.0 / matrix.diagonal()
    r = rhs - matrix @ weighted.x
    measured = np.sqrt(r @ (inv * r)) / np.sqrt(rhs @ (inv * rhs))
    assert measured <= 1e-8
    assert weighted.residual == pytest.approx(measured, rel=1e-6, abs=1e-14)
    heavy = scales >= 1e-4
    assert float(np.max(np.abs(weighted.x[heavy] - exact[heavy]))) < 1e-3
    assert plain.residual <= 1e-8
    with pytest.raises(ValidationError):
        pcg(lambda x: x, rhs, np.ones(size), tol=1e-8, max_iter=5, where="t", stopping="energy")


def test_half_ball_grid_grading() -> None:
    grid = HalfBallGrid(4, 0.4, 13, eps=0.02)
    assert grid.shape == (13, 13, 13, 7)
    assert grid.coords[-1][0] == 0.0
    assert grid.coords[0][6] == 0.0
    assert grid.central_spacing == pytest.approx(0.01, rel=0.1)
    assert grid.coords[-1][-1] == pytest.approx(0.4)
    assert abs(float(np.sum(grid.boundary_weights())) - 0.8**3) < 1e-12
    with pytest.raises(ValidationError):
        HalfBallGrid(4, 0.4, 12)


def test_quadrature_rules_integrate_exactly() -> None:
    nodes, weights = gauss_panels([0.0, 0.5, 2.0], 6)
    assert float(np.sum(weights * nodes**3)) == pytest.approx(4.0, rel=1e-12)
    rule = HemisphereRule(4)
    assert rule.directions.shape[1] == 4
    assert np.all(rule.directions[:, -1] >= 0.0)
    # half of the area of S^3
    assert float(np.sum(rule.weights)) == pytest.approx(np.pi**2, rel=1e-10)


def test_polar_grid_coarsening() -> None:
    rule = PolarGrid(4, 0.05, 0.4, 0.8)
    coarse = rule.coarsened()
    assert coarse.volume_nodes()[1].size < rule.volume_nodes()[1].size
    points, weights = rule.boundary_nodes()
    assert np.all(points[:, -1] == 0.0)
    assert float(np.sum(weights)) == pytest.approx(4.0 / 3.0 * np.pi * 0.8**3, rel=1e-8)
