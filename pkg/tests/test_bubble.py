import math

import numpy as np
import pytest

from scalarflat_lab.bubble import (
    DEFAULT_CUTOFF,
    BubbleParams,
    CutoffProfile,
    boundary_residual,
    bound_ratios,
    bubble_eval,
    bubble_quotient,
    cutoff_eval,
    dimension_constants,
    omega,
    radial_moment,
    truncated_boundary_mass,
)
from scalarflat_lab.exceptions import Divergent, DomainError, ValidationError


def test_closed_form_constants() -> None:
    assert dimension_constants(3).A == pytest.approx(math.pi, rel=1e-12)
    assert dimension_constants(4).A == pytest.approx(math.pi**2 / 4.0, rel=1e-12)
    five = dimension_constants(5)
    assert five.B == pytest.approx(math.pi**2 / 60.0, rel=1e-12)
    assert five.D == pytest.approx(math.pi**2 / 24.0, rel=1e-12)
    assert omega(2) == pytest.approx(4.0 * math.pi)


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 8])
def test_quadrature_agrees_with_closed_forms(n: int) -> None:
    constants = dimension_constants(n)
    for name, agreement in constants.oracle_agreement.items():
        if agreement is not None:
            assert agreement <= 1e-10, name
    assert constants.Q_ball == pytest.approx(4.0 * (n - 1) * constants.A ** (1.0 / (n - 1)))


def test_d_diverges_in_dimension_three() -> None:
    constants = dimension_constants(3)
    assert constants.D is None
    assert constants.to_dict()["D"] == "divergent"
    with pytest.raises(Divergent):
        constants.require_D()


def test_bubble_solves_boundary_problem() -> None:
    params = BubbleParams(5, 0.05, 0.2)
    rng = np.random.default_rng(11)
    tangential = rng.uniform(-0.5, 0.5, size=(32, 4))
    assert np.max(np.abs(boundary_residual(params, tangential))) < 1e-12


@pytest.mark.parametrize("n", [3, 4, 6])
def test_bubble_bounds(n: int) -> None:
    params = BubbleParams(n, 0.1, 0.4)
    rng = np.random.default_rng(n)
    points = rng.uniform(-1.0, 1.0, size=(200, n))
    points[:, -1] = np.abs(points[:, -1])
    value_ratio, gradient_ratio = bound_ratios(params, points)
    assert np.all(value_ratio >= 1.0 - 1e-12)
    assert np.all(value_ratio <= 2.0 ** ((n - 2) / 2.0) + 1e-12)
    assert np.all(gradient_ratio >= (n - 2) - 1e-12)
    assert np.all(gradient_ratio <= (n - 2) * 2.0 ** ((n - 1) / 2.0) + 1e-12)


def test_bubble_parameter_checks() -> None:
    with pytest.raises(ValidationError):
        BubbleParams(4, 0.3, 0.5)
    with pytest.raises(ValidationError):
        BubbleParams(2, 0.1, 0.5)
    params = BubbleParams(4, 0.1, 0.5)
    with pytest.raises(DomainError):
        bubble_eval(params, np.array([0.0, 0.0, 0.0, -0.1]))
    value, _ = bubble_eval(params, np.zeros(4))
    # v_eps(0) = eps^((n-2)/2) eps^(2-n)
    assert float(value) == pytest.approx(0.1 ** (-1.0))


def test_truncated_mass_tends_to_total() -> None:
    total = dimension_constants(4).A
    masses = [truncated_boundary_mass(4, 0.01, radius) for radius in (0.1, 1.0, 100.0)]
    assert masses[0] < masses[1] < masses[2]
    assert masses[2] == pytest.approx(total, rel=1e-6)


@pytest.mark.parametrize("n", [4, 5])
def test_flat_bubble_quotient_matches_ball_value(n: int) -> None:
    assert bubble_quotient(n, 0.05) == pytest.approx(dimension_constants(n).Q_ball, rel=1e-7)


def test_cutoff_profile() -> None:
    t = np.array([0.0, 1.0, 4.0 / 3.0, 1.5, 5.0 / 3.0, 2.0])
    values = DEFAULT_CUTOFF.value(t)
    assert values[0] == values[1] == values[2] == 1.0
    assert values[4] == values[5] == 0.0
    assert 0.0 < values[3] < 1.0
    assert values[3] == pytest.approx(0.5)
    assert DEFAULT_CUTOFF.c_eta > 0.0
    assert np.all(DEFAULT_CUTOFF.derivative(t[[0, 1, 5]]) == 0.0)
    value, gradient = cutoff_eval(DEFAULT_CUTOFF, 0.3, np.zeros((1, 4)))
    assert value[0] == 1.0
    assert np.all(gradient == 0.0)
    with pytest.raises(ValidationError):
        CutoffProfile(inner=2.0, outer=1.0)


def test_radial_moment_closed_forms() -> None:
    eps, delta = 0.01, 0.4
    s = 1.0 + delta / eps
    # n = 4, k = 1 is the logarithmic case
    interior = math.log(s) + 3.0 / s - 1.5 / s**2 + 1.0 / (3.0 * s**3) - 11.0 / 6.0
    assert radial_moment(4, 1, eps, delta) == pytest.approx(
        omega(3) * eps**2 * interior, rel=1e-8
    )
    boundary = 1.0 / 3.0 - 1.0 / s + 1.0 / s**2 - 1.0 / (3.0 * s**3)
    assert radial_moment(4, 1, eps, delta, boundary=True) == pytest.approx(
        omega(2) * eps**2 * boundary, rel=1e-8
    )
