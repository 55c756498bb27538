import numpy as np
import pytest

from scalarflat_lab.criterion import (
    CASES,
    applicable_case,
    c_bar,
    check_conditions,
    classify_Z_case,
    crossover,
    eps_ladder,
    fit_scaling,
    gap_scan,
    predicted_model,
)
from scalarflat_lab.energy import BoundaryFunction
from scalarflat_lab.exceptions import (
    InsufficientSweep,
    NotSomewherePositive,
    NotUmbilic,
    RegimeMismatch,
    ValidationError,
)
from scalarflat_lab.geometry import build_chart
from scalarflat_lab.models import BoundaryFunctionSpec, ChartSpec
from scalarflat_lab.selftest import constant_function, linear_chart, radial_function, umbilic_chart


@pytest.mark.parametrize(
    "n, umbilic, star, star_star, expected",
    [
        (3, False, False, False, "escobar_case"),
        (4, False, False, False, "non_umbilic_dim4"),
        (5, False, False, True, "non_umbilic_dim5plus"),
        (5, False, True, False, "none"),
        (5, True, True, False, "escobar_case"),
        (6, True, True, False, "umbilic_dim6plus"),
        (7, True, False, True, "none"),
    ],
)
def test_applicable_case_table(
    n: int, umbilic: bool, star: bool, star_star: bool, expected: str
) -> None:
    assert applicable_case(n, umbilic, star, star_star) == expected


def test_laplacian_surrogate_constant() -> None:
    assert c_bar(3) == 0.0
    assert c_bar(4) == 0.0
    assert c_bar(5) > 0.0
    assert c_bar(6, theta_hat=0.5) == pytest.approx(0.5 * c_bar(6))


def test_conditions_for_non_umbilic_chart() -> None:
    chart = build_chart(linear_chart(4, [1.0, -1.0]))
    report = check_conditions(chart, radial_function(4, [1.0, -1.0]))
    assert report.umbilic_at_p is False
    assert report.applicable_theorem == "non_umbilic_dim4"
    assert report.condition_star is False
    assert report.star_evidence[2] > 0.0
    assert report.star_star_evidence["laplacian_f"] == pytest.approx(-6.0)
    assert report.predicted == "eps2_log"
    assert report.to_dict()["star_evidence"]["1"] == 0.0
    with pytest.raises(ValidationError):
        check_conditions(chart, constant_function(5))
    negative = BoundaryFunction.from_spec(
        BoundaryFunctionSpec("constant", {"value": -1.0}, normalized=False), 4
    )
    with pytest.raises(NotSomewherePositive):
        check_conditions(chart, negative)


def test_z_classification() -> None:
    with pytest.raises(ValidationError):
        classify_Z_case(build_chart(linear_chart(4, [1.0, -1.0])))
    with pytest.raises(NotUmbilic):
        classify_Z_case(build_chart(linear_chart(6, [1.0, -1.0])))
    umbilic = build_chart(umbilic_chart(6))
    assert classify_Z_case(umbilic) == {
        "case": "z_nonzero",
        "alpha0": 2,
        "deciding_quantity": "gap_scaling",
    }
    report = check_conditions(umbilic, constant_function(6))
    assert report.condition_star is True
    assert report.applicable_theorem == "umbilic_dim6plus"
    assert predicted_model(report) == "eps_n2_log"


def _sweep(eps: np.ndarray, gap: np.ndarray) -> list[dict[str, float]]:
    return [{"eps": float(e), "gap": float(g)} for e, g in zip(eps, gap)]


def test_fit_scaling_picks_the_generating_model() -> None:
    eps = np.array(eps_ladder(0.1, 2.0, 5))
    log_fit = fit_scaling(_sweep(eps, 2.0 * eps**2 * np.log(0.4 / eps)), 0.4, 4)
    assert log_fit["model"] == "eps2_log"
    assert log_fit["coefficient"] == pytest.approx(2.0)
    assert log_fit["residual"] < 1e-12
    plain = fit_scaling(_sweep(eps, 3.0 * eps**2), 0.4, 5)
    assert plain["model"] == "eps2"
    assert plain["exponent"] == pytest.approx(2.0)
    power = fit_scaling(_sweep(eps, 0.5 * eps**4), 0.4, 8, alpha0=2)
    assert power["model"] == "eps_pow_2a0"
    assert "eps_pow_2a0" not in fit_scaling(_sweep(eps, eps**2), 0.4, 5)["scores"]


def test_fit_scaling_rejects_short_sweeps() -> None:
    eps = np.array([0.1, 0.05, 0.025])
    with pytest.raises(InsufficientSweep):
        fit_scaling(_sweep(eps, eps**2), 0.4, 4)
    narrow = np.array([0.1, 0.09, 0.08, 0.07])
    with pytest.raises(InsufficientSweep):
        fit_scaling(_sweep(narrow, narrow**2), 0.4, 4)
    wide = np.array(eps_ladder(0.1, 2.0, 4))
    with pytest.raises(InsufficientSweep):
        fit_scaling(_sweep(wide, np.array([1.0, 0.5, 0.0, 0.1])), 0.4, 4)


def test_eps_ladder() -> None:
    assert eps_ladder(0.2, 2.0, 4) == [0.2, 0.1, 0.05, 0.025]
    with pytest.raises(ValidationError):
        eps_ladder(0.2, 1.0, 4)


def test_flat_chart_is_the_equality_case() -> None:
    n = 4
    flat = build_chart(ChartSpec(n, 1.0, "flat"))
    report = gap_scan(flat, constant_function(n), 0.4, eps_ladder(0.2, 2.0, 4), threads=2)
    assert report.verdict is False
    assert report.witness is None
    assert report.fitted_model["model"] == "equality-case"
    assert report.extras["quotient_limit_relative_error"] < 0.05
    assert [row["eps"] for row in report.sweep] == [0.2, 0.1, 0.05, 0.025]
    assert report.to_dict()["conditions"]["applicable_theorem"] == "escobar_case"


def test_gap_scan_argument_checks() -> None:
    n = 4
    flat = build_chart(ChartSpec(n, 1.0, "flat"))
    f = constant_function(n)
    with pytest.raises(InsufficientSweep):
        gap_scan(flat, f, 0.4, [0.2, 0.1, 0.05])
    with pytest.raises(ValidationError):
        gap_scan(flat, f, 0.4, [0.2, 0.1, 0.1, 0.05])
    with pytest.raises(ValidationError):
        gap_scan(flat, f, 0.8, eps_ladder(0.2, 2.0, 4))
    with pytest.raises(RegimeMismatch):
        gap_scan(flat, f, 0.4, eps_ladder(0.2, 2.0, 4), testfn="phi2")
    with pytest.raises(ValidationError):
        gap_scan(flat, f, 0.4, eps_ladder(0.2, 2.0, 4), testfn="phi3")


def test_case_table_reaches_every_label() -> None:
    reached = {
        applicable_case(n, umbilic, star, star_star)
        for n in range(3, 8)
        for umbilic in (False, True)
        for star in (False, True)
        for star_star in (False, True)
    }
    assert reached == set(CASES)


def _unnormalized_radial(n: int, coefficients: list[float]) -> BoundaryFunction:
    spec = BoundaryFunctionSpec("radial", {"coefficients": coefficients}, normalized=False)
    return BoundaryFunction.from_spec(spec, n)


def test_conditions_are_taken_on_f_over_max_f() -> None:
    chart = build_chart(linear_chart(5, [1.0, -1.0]))
    unit = check_conditions(chart, radial_function(5, [1.0, -1.0]))
    tripled = check_conditions(chart, _unnormalized_radial(5, [3.0, -3.0]))
    assert tripled.star_star_evidence["laplacian_f"] == pytest.approx(-8.0)
    assert tripled.to_dict() == unit.to_dict()


def test_conditions_use_the_fitted_theta() -> None:
    chart = build_chart(linear_chart(5, [1.0, -1.0]))
    f = radial_function(5, [1.0, 0.0, -1.0])
    default = check_conditions(chart, f)
    assert default.star_star_evidence["c_n_source"] == "surrogate(theta_hat=1)"
    fitted = check_conditions(chart, f, theta_hat=2.5)
    assert fitted.star_star_evidence["c_n"] == pytest.approx(c_bar(5, 2.5))
    assert fitted.star_star_evidence["c_n_source"] == "surrogate(theta_hat=2.5)"
    configured = check_conditions(chart, f, c_n=0.3)
    assert configured.star_star_evidence["c_n_source"] == "configured"


def test_quadratic_f_breaks_the_flatness_condition_in_dimension_six() -> None:
    report = check_conditions(build_chart(umbilic_chart(6)), radial_function(6, [1.0, -1.0]))
    assert report.condition_star is False
    assert report.star_evidence[2] > 0.0
    assert report.applicable_theorem == "none"


def test_flat_scan_is_invariant_under_scaling_f() -> None:
    n = 4
    flat = build_chart(ChartSpec(n, 1.0, "flat"))
    eps = eps_ladder(0.2, 2.0, 4)
    tripled = BoundaryFunction.from_spec(
        BoundaryFunctionSpec("constant", {"value": 3.0}, normalized=False), n
    )
    unit = gap_scan(flat, constant_function(n), 0.4, eps)
    scaled = gap_scan(flat, tripled, 0.4, eps)
    assert scaled.verdict == unit.verdict
    for a, b in zip(scaled.sweep, unit.sweep):
        assert a["gap"] == pytest.approx(b["gap"], rel=1e-12, abs=1e-14)
        assert a["norm_f"] == pytest.approx(b["norm_f"], rel=1e-12)


def test_crossover_extrapolates_the_excess_law() -> None:
    # excess 2 eps^2 log(delta/eps) against a loss of 10 eps^2
    fitted = {"model": "eps2_log", "coefficient": 2.0}
    loss = {"coefficient": 10.0, "exponent": 2.0}
    result = crossover(fitted, loss, 0.2, 4, 0.01)
    expected = np.log10(0.2 * np.exp(-5.0))
    assert result["reason"] == "extrapolated"
    assert result["log10_eps"] == pytest.approx(expected, abs=1e-8)
    # excess 3 eps^2 against 6 eps^3: equal at eps = 0.5, inside a sweep ending at 0.01
    cubic_loss = {"coefficient": 6.0, "exponent": 3.0}
    plain = crossover({"model": "eps2", "coefficient": 3.0}, cubic_loss, 0.2, 5, 0.01)
    assert plain["reason"] == "reached within the sweep"
    negative = crossover({"model": "eps2", "coefficient": -1.0}, loss, 0.2, 5, 0.01)
    assert negative["log10_eps"] is None


@pytest.mark.slow
def test_curved_scan_reports_excess_and_is_scale_invariant() -> None:
    n = 4
    chart = build_chart(linear_chart(n, [1.0, -1.0]))
    eps = eps_ladder(0.05, 2.0, 4)
    tripled = BoundaryFunction.from_spec(
        BoundaryFunctionSpec("constant", {"value": 3.0}, normalized=False), n
    )
    report = gap_scan(chart, constant_function(n), 0.2, eps, points=9)
    scaled = gap_scan(chart, tripled, 0.2, eps, points=9)
    assert scaled.verdict == report.verdict
    assert report.fitted_model["fitted_to"] == "excess"
    assert report.conditions.predicted == "eps2_log"
    for row, other in zip(report.sweep, scaled.sweep):
        assert row["excess"] == pytest.approx(row["gap"] - row["reference_gap"])
        assert row["reference_gap"] < 0.0
        assert other["gap"] == pytest.approx(row["gap"], rel=1e-10, abs=1e-12)
    assert "excess_verdict" in report.extras
    assert "crossover" in report.extras


@pytest.mark.slow
def test_dimension_five_scan_with_quartic_f() -> None:
    n = 5
    chart = build_chart(linear_chart(n, [1.0, -1.0]))
    f = radial_function(n, [1.0, 0.0, -1.0])
    report = gap_scan(chart, f, 0.2, eps_ladder(0.05, 2.0, 4), points=9)
    assert report.conditions.star_star_evidence["laplacian_f"] == 0.0
    assert report.conditions.predicted == "eps2"
    assert report.fitted_model["fitted_to"] == "excess"
    assert all(row["reference_gap"] < 0.0 for row in report.sweep)
    assert report.to_dict()["conditions"]["applicable_theorem"] == "non_umbilic_dim5plus"
