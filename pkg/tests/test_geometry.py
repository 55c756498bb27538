import numpy as np
import pytest

from scalarflat_lab.exceptions import InvariantViolation, NonPositiveDefinite, ValidationError
from scalarflat_lab.geometry import (
    TaylorTensor,
    algebraic_curvature,
    boundary_mean_curvature,
    build_chart,
    conformal_deformation,
    curvature_data,
    determinant_order,
    matrix_log_sym,
    scalar_curvature,
)
from scalarflat_lab.models import ChartSpec, parse_coefficient_key
from scalarflat_lab.selftest import linear_chart, umbilic_chart


def test_linear_chart_second_fundamental_form() -> None:
    chart = build_chart(linear_chart(4, [1.0, -1.0]))
    data = curvature_data(chart)
    np.testing.assert_allclose(data.pi0, np.diag([1.0, -1.0, 0.0]), atol=1e-6)
    assert data.pi_norm_sq == pytest.approx(2.0, rel=1e-6)
    assert abs(data.identity_defect) < 1e-6
    assert data.umbilic is False
    assert data.mean_curvature0 == pytest.approx(0.0, abs=1e-8)
    assert determinant_order(chart) is None


def test_linear_chart_scalar_curvature() -> None:
    # on the plateau R = -|T|^2 for h = -2 x_n T with tr T = 0
    chart = build_chart(linear_chart(4, [1.0, -1.0]))
    assert scalar_curvature(chart, [0.0, 0.0, 0.0, 0.0]) == pytest.approx(-2.0, abs=1e-3)
    assert scalar_curvature(chart, [0.05, 0.0, 0.0, 0.1]) == pytest.approx(-2.0, abs=1e-3)
    assert scalar_curvature(build_chart(ChartSpec(4, 1.0, "flat")), [0.0] * 4) == 0.0


@pytest.mark.parametrize(
    "key, fragment",
    [
        ("1.1:0001", "trace-free"),
        ("1.4:0001", "h_in"),
        ("1.2:1000", "tangential first derivative"),
    ],
)
def test_chart_invariant_violations(key: str, fragment: str) -> None:
    coefficient = parse_coefficient_key(key, 4, "test")
    spec = ChartSpec(4, 1.0, "non_umbilic_linear", {coefficient: -2.0})
    with pytest.raises(InvariantViolation) as info:
        build_chart(spec)
    assert fragment in str(info.value)
    assert info.value.exit_code == 2


def test_chart_spec_validation_runs_first() -> None:
    with pytest.raises(ValidationError):
        build_chart(ChartSpec(4, 0.0, "flat"))


def test_umbilic_chart_has_nonzero_weyl_part() -> None:
    chart = build_chart(umbilic_chart(6))
    data = curvature_data(chart)
    assert data.umbilic is True
    assert data.in_Z_set is False
    assert data.alpha0 == 2
    key = parse_coefficient_key("1.2:001001", 6, "test")
    assert data.H.coefficients[key] == pytest.approx(0.5, rel=1e-5)
    points = np.array([[0.1, -0.2, 0.05, 0.0, 0.0, 0.0], [0.0, 0.3, -0.1, 0.2, 0.0, 0.0]])
    np.testing.assert_allclose(boundary_mean_curvature(chart, points), 0.0, atol=1e-12)


def test_weyl_symmetries() -> None:
    rng = np.random.default_rng(5)
    n = 5
    coefficients = {}
    for i, k in [(0, 1), (1, 2), (0, 3)]:
        alpha = [0] * n
        alpha[int(rng.integers(0, n))] += 1
        alpha[int(rng.integers(0, n))] += 1
        coefficients[(i, k, tuple(alpha))] = float(rng.normal())
    algebra = algebraic_curvature(TaylorTensor(n, coefficients))
    for Z in algebra.Z.values():
        np.testing.assert_allclose(Z, -Z.transpose(1, 0, 2, 3), atol=1e-12)
        np.testing.assert_allclose(Z, -Z.transpose(0, 1, 3, 2), atol=1e-12)
        np.testing.assert_allclose(Z, Z.transpose(2, 3, 0, 1), atol=1e-12)


def test_conformal_deformations_have_no_weyl_part() -> None:
    n = 6
    field = {
        0: {(0, 1, 1, 0, 0, 0): 1.0, (0, 0, 0, 0, 0, 3): -0.3},
        2: {(2, 0, 0, 0, 0, 1): 0.5},
        5: {(1, 1, 0, 0, 1, 0): 0.25},
    }
    deformation = conformal_deformation(field, n)
    assert deformation.coefficients
    assert algebraic_curvature(deformation).max_abs_Z <= 1e-10


def test_metric_sampling_is_consistent() -> None:
    chart = build_chart(linear_chart(4, [1.0, -1.0]))
    points = np.array([[0.0, 0.0, 0.0, 0.1], [0.1, -0.2, 0.05, 0.3], [0.4, 0.1, 0.0, 0.2]])
    g = chart.metric(points)
    product = np.einsum("...ij,...jk->...ik", g, chart.metric_inverse(points))
    np.testing.assert_allclose(product, np.broadcast_to(np.eye(4), product.shape), atol=1e-12)
    np.testing.assert_allclose(chart.h_sampler(points), chart.h(points), atol=1e-12)
    np.testing.assert_allclose(chart.sqrt_det(points), 1.0, atol=1e-12)
    np.testing.assert_allclose(g[:, 3, :3], 0.0, atol=1e-14)


def test_matrix_log_rejects_indefinite_samples() -> None:
    with pytest.raises(NonPositiveDefinite):
        matrix_log_sym(np.diag([1.0, -1.0]))
