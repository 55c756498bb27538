import pytest

from scalarflat_lab.exceptions import ValidationError
from scalarflat_lab.selftest import CRITERIA, TIERS, run_selftest


def test_criteria_cover_every_tier() -> None:
    tiers = {level for _, _, level, _ in CRITERIA}
    assert tiers == set(TIERS)
    keys = [key for key, _, _, _ in CRITERIA]
    assert len(keys) == len(set(keys))


def test_single_fast_criterion() -> None:
    report = run_selftest("fast", only=["constants"])
    assert report["count"] == 1
    assert report["passed"] is True
    entry = report["criteria"][0]
    assert entry["criterion"] == "constants"
    assert entry["error"] is None
    assert entry["details"]["quotient_spread"] <= 1e-8


def test_tier_filters_criteria() -> None:
    report = run_selftest("fast", only=["constants", "solver"])
    assert [entry["criterion"] for entry in report["criteria"]] == ["constants"]


def test_selftest_rejects_unknown_input() -> None:
    with pytest.raises(ValidationError):
        run_selftest("thorough")
    with pytest.raises(ValidationError):
        run_selftest("fast", only=["nonexistent"])


def test_fast_tier_passes() -> None:
    report = run_selftest("fast")
    failed = [entry["criterion"] for entry in report["criteria"] if not entry["passed"]]
    assert failed == []


def test_bound_suite_measures_perturbation_constant() -> None:
    report = run_selftest("fast", only=["bounds"])
    entry = report["criteria"][0]
    assert entry["error"] is None
    constants = entry["details"]["perturbation_bound"]["measured_C"]
    assert len(constants) == 3
    assert all(c > 0.0 for c in constants)
    assert entry["details"]["perturbation_bound"]["variation"] is not None
