import math
from typing import Any

import numpy as np
import pytest

from scalarflat_lab.bubble import BubbleParams, dimension_constants
from scalarflat_lab.energy import (
    BoundaryFunction,
    boundary_norm,
    cutoff_bubble,
    evaluate_report,
    phi_power_bound,
    power_law_fit,
    power_mean_inequality_check,
    tail_norm,
)
from scalarflat_lab.exceptions import HypothesisViolated, ValidationError
from scalarflat_lab.geometry import build_chart
from scalarflat_lab.models import BoundaryFunctionSpec, ChartSpec


def _function(kind: str, normalized: bool = True, n: int = 4, **params: Any) -> BoundaryFunction:
    return BoundaryFunction.from_spec(BoundaryFunctionSpec(kind, params, normalized), n)


def test_paraboloid_derivative_data() -> None:
    f = _function("radial", coefficients=[1.0, -1.0])
    assert f.value0 == 1.0
    np.testing.assert_allclose(f.gradient0(), 0.0)
    np.testing.assert_allclose(f.hessian0(), -2.0 * np.eye(3))
    assert f.laplacian0() == pytest.approx(-6.0)
    assert f.derivative_norm(2) == pytest.approx(math.sqrt(12.0))
    assert f.derivative_norm(1) == 0.0
    assert f.sample(np.array([[0.5, 0.0, 0.0]]))[0] == pytest.approx(0.75)


def test_polynomial_function() -> None:
    f = _function("polynomial", False, coefficients={"000": 1.0, "110": 0.25, "002": -1.0})
    assert f.hessian0()[0, 1] == pytest.approx(0.25)
    assert f.hessian0()[2, 2] == pytest.approx(-2.0)
    with pytest.raises(ValidationError):
        _function("polynomial", coefficients={"11": 1.0})


def test_normalization_is_enforced() -> None:
    with pytest.raises(ValidationError):
        _function("constant", value=2.0)
    with pytest.raises(ValidationError):
        _function("radial", coefficients=[1.0, 1.0])
    f = _function("constant", normalized=False, value=2.0).normalized()
    assert f.value0 == pytest.approx(1.0)
    assert f.spec.normalized is True


def test_cosine_functions_live_on_the_ball() -> None:
    f = _function("cosine", normalized=False, mean=1.0, amplitude=0.1)
    assert f.is_ball_only
    assert f.value0 == pytest.approx(1.1)
    np.testing.assert_allclose(f.sample_polar(np.array([0.0, math.pi])), [1.1, 0.9])
    with pytest.raises(ValidationError):
        f.sample(np.zeros((1, 3)))
    with pytest.raises(ValidationError):
        f.laplacian0()


def test_power_mean_inequality() -> None:
    check = power_mean_inequality_check([1.0, 1.5, 0.9], [1.2, 0.8, 0.9], 0.5, 1.0)
    assert check.holds
    assert check.measured_C <= check.C
    assert check.to_dict()["min_slack"] >= 0.0
    with pytest.raises(ValidationError):
        power_mean_inequality_check([1.0], [1.0], 1.5)
    with pytest.raises(HypothesisViolated):
        power_mean_inequality_check([1.0, 0.1], [1.0, 1.0], 0.5, 1.0)


def test_power_law_fit() -> None:
    x = np.array([0.1, 0.05, 0.025])
    fit = power_law_fit(x, 3.0 * x**2)
    assert fit["exponent"] == pytest.approx(2.0)
    assert fit["coefficient"] == pytest.approx(3.0)
    with pytest.raises(ValidationError):
        power_law_fit([0.1], [1.0])


def test_flat_cutoff_bubble_energy() -> None:
    n = 4
    flat = build_chart(ChartSpec(n, 1.0, "flat"))
    params = BubbleParams(n, 0.005, 0.4)
    phi = cutoff_bubble(params)
    one = _function("constant", value=1.0)
    report = evaluate_report(flat, phi, one)
    constants = dimension_constants(n)
    assert report.boundary_norm_f == pytest.approx(report.boundary_norm_1)
    assert report.boundary_norm_1 == pytest.approx(constants.A, rel=1e-2)
    assert report.Q_of_phi == pytest.approx(constants.Q_ball, rel=5e-2)
    assert report.details["energy_boundary"] == 0.0
    assert report.to_dict()["test_function"] == "phi1"
    assert tail_norm(flat, phi) < 1e-3 * report.boundary_norm_1
    paraboloid = _function("radial", coefficients=[1.0, -1.0])
    assert boundary_norm(flat, phi, paraboloid) < report.boundary_norm_1


@pytest.mark.parametrize("eps", [0.02, 0.005])
def test_cutoff_bubble_power_bound(eps: float) -> None:
    n = 4
    params = BubbleParams(n, eps, 0.4)
    ratio = phi_power_bound(cutoff_bubble(params), params)
    assert 1.0 - 1e-9 <= ratio <= 2.0 ** (n - 1)
