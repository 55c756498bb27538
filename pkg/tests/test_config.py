from pathlib import Path

import pytest

from scalarflat_lab.config import load_chart, load_function, load_run_config
from scalarflat_lab.exceptions import ValidationError
from scalarflat_lab.models import ChartSpec, RunConfig, format_coefficient_key


def test_chart_loading_from_yaml(tmp_path: Path) -> None:
    chart_path = tmp_path / "chart.yaml"
    chart_path.write_text(
        """
n: 6
delta_max: 1.0
model_kind: curvature_quadratic
coefficients:
  "1.2:001001": 0.5
""",
        encoding="utf-8",
    )
    spec = load_chart(chart_path)
    assert isinstance(spec, ChartSpec)
    assert spec.n == 6
    assert spec.coefficients == {(0, 1, (0, 0, 1, 0, 0, 1)): 0.5}
    assert spec.to_dict()["coefficients"] == {"1.2:001001": 0.5}


def test_linear_chart_from_second_fundamental_form(tmp_path: Path) -> None:
    chart_path = tmp_path / "chart.json"
    chart_path.write_text(
        '{"n": 4, "delta_max": 1.0, "model_kind": "non_umbilic_linear",'
        ' "T": [[1, 0, 0], [0, -1, 0], [0, 0, 0]]}',
        encoding="utf-8",
    )
    spec = load_chart(chart_path)
    keys = {format_coefficient_key(key): value for key, value in spec.coefficients.items()}
    assert keys == {"1.1:0001": -2.0, "2.2:0001": 2.0}


def test_coefficient_keys_are_symmetric(tmp_path: Path) -> None:
    chart_path = tmp_path / "chart.json"
    chart_path.write_text(
        '{"n": 6, "delta_max": 1.0, "model_kind": "curvature_quadratic",'
        ' "coefficients": {"2.1:001001": 0.25}}',
        encoding="utf-8",
    )
    spec = load_chart(chart_path)
    assert list(spec.coefficients) == [(0, 1, (0, 0, 1, 0, 0, 1))]


@pytest.mark.parametrize(
    "body, fragment",
    [
        ('{"n": 4, "model_kind": "flat"}', "delta_max"),
        ('{"n": 4, "delta_max": 1.0, "model_kind": "wavy"}', "model_kind"),
        ('{"n": 4, "delta_max": 1.0, "model_kind": "flat",'
         ' "coefficients": {"1.2:0011": 1}}', "flat"),
        ('{"n": 4, "delta_max": 1.0, "model_kind": "custom_polynomial",'
         ' "coefficients": {"1.2:001": 1}}', "exponent digits"),
        ('{"n": 4, "delta_max": -1.0, "model_kind": "flat"}', "delta_max"),
    ],
)
def test_chart_rejections_name_the_file(tmp_path: Path, body: str, fragment: str) -> None:
    chart_path = tmp_path / "bad.json"
    chart_path.write_text(body, encoding="utf-8")
    with pytest.raises(ValidationError) as info:
        load_chart(chart_path)
    assert str(info.value).startswith(str(chart_path))
    assert fragment in str(info.value)


def test_function_specs(tmp_path: Path) -> None:
    radial = tmp_path / "radial.json"
    radial.write_text('{"kind": "radial", "coefficients": [1.0, -1.0]}', encoding="utf-8")
    spec = load_function(radial)
    assert spec.kind == "radial"
    assert spec.normalized is True
    assert spec.params["coefficients"] == [1.0, -1.0]

    cosine = tmp_path / "cosine.yaml"
    cosine.write_text("kind: cosine\nmean: 1.0\namplitude: 0.1\nnormalized: false\n")
    spec = load_function(cosine)
    assert spec.params == {"mean": 1.0, "amplitude": 0.1}
    assert spec.normalized is False


def test_function_rejections(tmp_path: Path) -> None:
    path = tmp_path / "f.json"
    path.write_text('{"kind": "radial", "coefficients": []}', encoding="utf-8")
    with pytest.raises(ValidationError):
        load_function(path)
    path.write_text('{"kind": "spline"}', encoding="utf-8")
    with pytest.raises(ValidationError):
        load_function(path)


def test_run_config_loading(tmp_path: Path) -> None:
    config_path = tmp_path / "run.yaml"
    config_path.write_text(
        """
command: constants
threads: 2
parameters:
  n: 5
""",
        encoding="utf-8",
    )
    config = load_run_config(config_path)
    assert config.command == "constants"
    assert config.threads == 2
    assert config.parameters == {"n": 5}
    assert RunConfig.from_dict(config.to_dict()) == config


def test_run_config_hash_ignores_output_directory() -> None:
    first = RunConfig("constants", {"n": 4}, out_dir="/tmp/a")
    second = RunConfig("constants", {"n": 4}, out_dir="/tmp/b")
    third = RunConfig("constants", {"n": 5})
    assert first.hash == second.hash
    assert first.hash != third.hash
    assert len(first.hash) == 12


def test_run_config_validation(tmp_path: Path) -> None:
    with pytest.raises(ValidationError):
        RunConfig("constants", {"n": 12}).validate()
    with pytest.raises(ValidationError):
        RunConfig("corrector", {"eps": 0.0}).validate()
    with pytest.raises(ValidationError):
        RunConfig("chart-check", {"chart_path": str(tmp_path / "missing.json")}).validate()
    with pytest.raises(ValidationError):
        RunConfig("constants", {"n": 4}, threads=0).validate()
    RunConfig("constants", {"n": 4}).validate()
