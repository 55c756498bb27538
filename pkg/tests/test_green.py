import numpy as np
import pytest

from scalarflat_lab.criterion import green_setup
from scalarflat_lab.exceptions import InterpolationOutOfDomain, ValidationError
from scalarflat_lab.geometry import build_chart
from scalarflat_lab.green import (
    aitken_limit,
    conformal_coefficient,
    flux_integral,
    flux_sweep,
    fundamental,
    rho_out_sensitivity,
    solve_green,
)
from scalarflat_lab.grid import HalfBallGrid
from scalarflat_lab.models import ChartSpec
from scalarflat_lab.selftest import umbilic_chart


def test_fundamental_solution() -> None:
    points = np.array([[0.0, 0.0, 0.0, 2.0], [1.0, 1.0, 1.0, 1.0]])
    value, gradient = fundamental(4, points)
    np.testing.assert_allclose(value, [0.25, 0.25])
    np.testing.assert_allclose(gradient[0], [0.0, 0.0, 0.0, -0.25])
    assert conformal_coefficient(4) == pytest.approx(6.0)


def test_aitken_limit() -> None:
    limit, uncertainty = aitken_limit([1.0, 0.5, 0.25, 0.125])
    assert limit == pytest.approx(0.0, abs=1e-15)
    assert uncertainty > 0.0
    assert aitken_limit([2.0]) == (2.0, float("inf"))
    assert aitken_limit([2.0, 1.5]) == (1.5, 0.5)


def test_flat_chart_has_no_regular_part() -> None:
    flat = build_chart(ChartSpec(4, 1.0, "flat"))
    grid, rho_out = green_setup(flat, 0.25, 9)
    assert rho_out == pytest.approx(2.2 * 5.0 / 8.0)
    data = solve_green(flat, grid, rho_out)
    assert float(np.max(np.abs(data.w.values))) <= 1e-8
    sweep = flux_sweep(data, flat, [0.6, 0.8, 0.4])
    assert sweep["deltas"] == [0.8, 0.6, 0.4]
    assert max(abs(value) for value in sweep["values"]) <= 1e-8
    assert sweep["limit_sign"] == 0
    value, _ = data.evaluate(np.array([[0.0, 0.0, 0.0, 0.5]]))
    assert value[0] == pytest.approx(4.0, abs=1e-8)
    with pytest.raises(InterpolationOutOfDomain):
        flux_integral(data, flat, 2.0 * rho_out)


def test_green_input_checks() -> None:
    flat = build_chart(ChartSpec(4, 1.0, "flat"))
    grid = HalfBallGrid(4, 1.0, 9)
    with pytest.raises(ValidationError):
        solve_green(flat, grid, 2.0)
    with pytest.raises(ValidationError):
        solve_green(build_chart(ChartSpec(5, 1.0, "flat")), grid, 1.0)


def test_flat_chart_is_insensitive_to_rho_out() -> None:
    flat = build_chart(ChartSpec(4, 1.0, "flat"))
    report = rho_out_sensitivity(flat, 9, 1.375, 0.5)
    assert report["rho_out"] == [1.375, 2.75]
    assert report["max_relative_change"] <= 1e-8
    assert report["scale"] == pytest.approx(1.375**-2)


@pytest.mark.slow
def test_umbilic_chart_flux_sweep() -> None:
    chart = build_chart(umbilic_chart(6))
    delta = 0.25
    grid, rho_out = green_setup(chart, delta, 9)
    data = solve_green(chart, grid, rho_out)
    assert data.residual_norm <= 1e-8
    assert float(np.max(np.abs(data.w.values))) > 0.0
    deltas = [d for d in (delta, 0.5 * delta, 0.25 * delta) if d > data.exclusion_radius]
    assert len(deltas) >= 2
    sweep = flux_sweep(data, chart, deltas)
    assert all(np.isfinite(value) for value in sweep["values"])
    assert len(sweep["increments"]) == len(deltas) - 1
    assert len(sweep["increment_ratios"]) == max(len(deltas) - 2, 0)
    assert data.flux_limit_estimate == (sweep["limit"], sweep["uncertainty"])
    assert data.summary()["flux_limit_estimate"]["value"] == sweep["limit"]
