import csv
import json
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import pytest

from scalarflat_lab import paths
from scalarflat_lab.artifacts import read_field
from scalarflat_lab.cli import main


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _run_dir(base: Path, command: str) -> Path:
    matches = sorted(base.glob(f"{command}-*"))
    assert len(matches) == 1
    return matches[0]


@pytest.fixture()
def inputs(tmp_path: Path) -> dict[str, Path]:
    return {
        "flat": _write(
            tmp_path / "charts" / "flat.json",
            '{"n": 4, "delta_max": 1.0, "model_kind": "flat"}',
        ),
        "trace": _write(
            tmp_path / "charts" / "trace.yaml",
            "n: 4\ndelta_max: 1.0\nmodel_kind: non_umbilic_linear\n"
            "coefficients:\n  \"1.1:0001\": -2.0\n",
        ),
        "one": _write(tmp_path / "functions" / "one.json", '{"kind": "constant", "value": 1.0}'),
    }


def test_constants_writes_run_artifacts(tmp_path: Path) -> None:
    out = tmp_path / "runs"
    assert main(["constants", "--n", "4", "--out", str(out)]) == 0
    run_dir = _run_dir(out, "constants")
    summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "PASS"
    assert summary["command"] == "constants"
    assert summary["config_hash"] in run_dir.name
    assert {"A", "B", "D", "Q_ball", "C_eta", "oracle_agreement"} <= set(summary["result"])
    assert abs(summary["result"]["A"] - math.pi**2 / 4.0) <= 1e-10 * math.pi**2
    header = (run_dir / "sweep.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "n,A,B,D,Q_ball"
    assert (run_dir / "report.md").exists()
    assert (run_dir / "report.html").exists()


def test_reruns_are_byte_identical(tmp_path: Path) -> None:
    out = tmp_path / "runs"
    assert main(["constants", "--n", "5", "--out", str(out)]) == 0
    summary_path = _run_dir(out, "constants") / "summary.json"
    first = summary_path.read_bytes()
    assert main(["constants", "--n", "5", "--out", str(out)]) == 0
    assert summary_path.read_bytes() == first


def test_usage_and_input_errors_exit_one(tmp_path: Path) -> None:
    out = str(tmp_path / "runs")
    assert main(["constants", "--out", out]) == 1
    assert main(["constants", "--n", "12", "--out", out]) == 1
    assert main(["chart-check", "--chart", str(tmp_path / "missing.json"), "--out", out]) == 1
    assert main(["flux", "--chart", "x.json", "--delta-sweep", "0.2", "--out", out]) == 1
    assert main(["selftest", "--tier", "thorough", "--out", out]) == 1
    assert main(["export", "--run", "nothing", "--out", out]) == 1


def test_invariant_violation_exits_two(tmp_path: Path, inputs: dict[str, Path]) -> None:
    out = str(tmp_path / "runs")
    assert main(["chart-check", "--chart", str(inputs["trace"]), "--out", out]) == 2


def test_flat_chart_check(tmp_path: Path, inputs: dict[str, Path]) -> None:
    out = tmp_path / "runs"
    assert main(["chart-check", "--chart", str(inputs["flat"]), "--out", str(out)]) == 0
    summary = json.loads((_run_dir(out, "chart-check") / "summary.json").read_text())
    assert summary["result"]["R0"] == 0.0
    assert summary["result"]["curvature"]["umbilic"] is True


def test_solve_writes_field_and_convergence(tmp_path: Path, inputs: dict[str, Path]) -> None:
    out = tmp_path / "runs"
    code = main(
        ["solve", "--n", "4", "--f", str(inputs["one"]), "--grid", "8,6", "--out", str(out)]
    )
    assert code == 0
    run_dir = _run_dir(out, "solve")
    components, spacing, radius = read_field(run_dir / "u.field")
    assert components[0].shape == (8, 6)
    assert radius == 1.0
    assert abs(float(components[0].max()) - 1.0) < 1e-6
    assert (run_dir / "convergence.csv").exists()
    assert (run_dir / "convergence.ldjson").exists()
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["result"]["state"]["converged"] is True


def test_solve_rejects_unknown_domain(tmp_path: Path, inputs: dict[str, Path]) -> None:
    out = str(tmp_path / "runs")
    args = ["solve", "--n", "4", "--f", str(inputs["one"]), "--grid", "8,6", "--out", out]
    assert main(args + ["--domain", "torus"]) == 1
    assert main(args + ["--domain", "half-ball"]) == 1


def test_solve_on_a_flat_chart_half_ball(tmp_path: Path, inputs: dict[str, Path]) -> None:
    out = tmp_path / "runs"
    args = ["solve", "--n", "4", "--f", str(inputs["one"]), "--domain", "half-ball"]
    args += ["--chart", str(inputs["flat"]), "--grid", "9,1.0", "--out", str(out)]
    assert main(args) == 0
    run_dir = _run_dir(out, "solve")
    components, _, radius = read_field(run_dir / "u.field")
    assert components[0].shape == (9, 9, 9, 5)
    assert radius == 1.0
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["result"]["state"]["domain"] == "half_ball_chart"
    assert summary["result"]["verification"]["checked_radius"] == 0.5


def test_flat_criterion_and_export(tmp_path: Path, inputs: dict[str, Path]) -> None:
    out = tmp_path / "runs"
    code = main(
        [
            "criterion",
            "--chart", str(inputs["flat"]),
            "--f", str(inputs["one"]),
            "--delta", "0.4",
            "--eps-sweep", "0.2,2,4",
            "--out", str(out),
        ]
    )
    assert code == 0
    run_dir = _run_dir(out, "criterion")
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["result"]["verdict"] is False
    assert summary["result"]["fitted_model"]["model"] == "equality-case"
    assert not (run_dir / "witness_u.field").exists()
    with (run_dir / "sweep.csv").open(encoding="utf-8") as handle:
        assert next(csv.reader(handle)) == ["eps", "E", "norm_f", "gap"]

    (run_dir / "sweep.csv").unlink()
    assert main(["export", "--run", run_dir.name, "--out", str(out)]) == 0
    assert (run_dir / "sweep.csv").exists()
    assert main(["export", "--run", run_dir.name, "--format", "parquet", "--out", str(out)]) == 1

    (run_dir / "report.md").unlink()
    assert main(["report", "--run-id", run_dir.name, "--out", str(out)]) == 0
    assert "criterion" in (run_dir / "report.md").read_text(encoding="utf-8")


def test_run_from_config_file(tmp_path: Path) -> None:
    out = tmp_path / "runs"
    config = _write(
        tmp_path / "run.yaml",
        f"command: constants\nout_dir: {out}\nparameters:\n  n: 6\n",
    )
    assert main(["run", "--config", str(config)]) == 0
    summary = json.loads((_run_dir(out, "constants") / "summary.json").read_text())
    assert summary["config"]["parameters"] == {"n": 6}
    bad = _write(tmp_path / "bad.yaml", "command: warp\nout_dir: x\n")
    assert main(["run", "--config", str(bad)]) == 1


def test_list_inputs(
    tmp_path: Path,
    inputs: dict[str, Path],
    monkeypatch: pytest.MonkeyPatch,
    capsys: pytest.CaptureFixture[str],
) -> None:
    monkeypatch.setattr(paths, "PROJECT_ROOT", tmp_path)
    assert main(["list-inputs"]) == 0
    output = capsys.readouterr().out
    assert "flat.json" in output
    assert "one.json" in output


def test_home_variable_moves_only_the_runs_directory(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setattr(paths, "PROJECT_ROOT", tmp_path / "checkout")
    monkeypatch.setenv(paths.RUNS_ENV, str(tmp_path / "elsewhere"))
    assert paths.runs_dir() == (tmp_path / "elsewhere" / "runs").resolve()
    assert paths.charts_dir() == tmp_path / "checkout" / "charts"
    assert paths.functions_dir() == tmp_path / "checkout" / "functions"
    assert paths.templates_dir() == tmp_path / "checkout" / "templates"
    monkeypatch.delenv(paths.RUNS_ENV)
    assert paths.runs_dir() == tmp_path / "checkout" / "runs"


def test_manifest_declares_the_cli_stack() -> None:
    manifest = tomllib.loads((Path(__file__).parents[1] / "pyproject.toml").read_text())
    names = {re.split(r"[\[<>=]", dep)[0] for dep in manifest["project"]["dependencies"]}
    assert {"typer", "click", "rich"} <= names
