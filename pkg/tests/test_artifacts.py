import csv
import json
from pathlib import Path

import numpy as np
import pytest

from scalarflat_lab.artifacts import LDJSONLogger, RunPaths, read_field, write_field
from scalarflat_lab.exceptions import ValidationError
from scalarflat_lab.exporter import export_csv, summary_table, write_table
from scalarflat_lab.reporting import render_reports
from scalarflat_lab.utils import canonical_json, config_hash, dump_json, read_json


def test_run_paths_layout(tmp_path: Path) -> None:
    paths = RunPaths(run_id="criterion-abc123", base_dir=tmp_path)
    assert paths.run_dir == tmp_path / "criterion-abc123"
    assert paths.summary_path.name == "summary.json"
    assert paths.sweep_csv_path.name == "sweep.csv"
    assert paths.convergence_path.name == "convergence.ldjson"
    assert paths.field_path("Witness U").name == "witness-u.field"


def test_field_dump_layout(tmp_path: Path) -> None:
    rng = np.random.default_rng(3)
    components = [rng.normal(size=(5, 5, 3)), rng.normal(size=(5, 5, 3))]
    path = tmp_path / "v.field"
    write_field(path, components, 0.125, 2.0)
    raw = path.read_bytes()
    assert raw[:4] == b"SFLD"
    header = 4 + 4 * 3 + 4 * 3 + 16
    assert len(raw) == header + 2 * 75 * 8
    loaded, spacing, radius = read_field(path)
    assert spacing == 0.125
    assert radius == 2.0
    for original, restored in zip(components, loaded):
        np.testing.assert_array_equal(original, restored)


def test_field_dump_rejects_mixed_shapes(tmp_path: Path) -> None:
    with pytest.raises(ValidationError):
        write_field(tmp_path / "x.field", [np.zeros((3, 3)), np.zeros((3, 4))], 1.0, 1.0)
    with pytest.raises(ValidationError):
        write_field(tmp_path / "x.field", [], 1.0, 1.0)


def test_ldjson_logger_appends_sorted_records(tmp_path: Path) -> None:
    logger = LDJSONLogger(tmp_path / "run" / "convergence.ldjson")
    logger.append({"solver": "pcg", "residual": np.float64(0.5), "iteration": 1})
    logger.append({"solver": "pcg", "residual": 0.25, "iteration": 2})
    lines = (tmp_path / "run" / "convergence.ldjson").read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0]) == {"iteration": 1, "residual": 0.5, "solver": "pcg"}
    assert lines[0].startswith('{"iteration"')


def test_json_helpers_are_canonical(tmp_path: Path) -> None:
    payload = {"b": np.arange(3), "a": float("inf"), "c": Path("x/y")}
    assert canonical_json(payload) == '{"a":"inf","b":[0,1,2],"c":"x/y"}'
    assert config_hash(payload) == config_hash({"c": Path("x/y"), "b": [0, 1, 2], "a": "inf"})
    dump_json(payload, tmp_path / "out.json")
    assert read_json(tmp_path / "out.json") == {"a": "inf", "b": [0, 1, 2], "c": "x/y"}


def test_write_table_flattens_nested_values(tmp_path: Path) -> None:
    rows = [
        {"eps": 0.1, "gap": 1e-3, "details": {"k": 1}},
        {"eps": 0.05, "gap": 2.5e-4, "extra": [1, 2]},
    ]
    destination = write_table(rows, tmp_path / "sweep.csv")
    with destination.open(encoding="utf-8") as handle:
        records = list(csv.DictReader(handle))
    assert list(records[0]) == ["eps", "gap", "details", "extra"]
    assert records[0]["details"] == '{"k": 1}'
    assert records[1]["extra"] == "[1, 2]"
    assert float(records[1]["gap"]) == 2.5e-4


def test_export_csv_from_summary(tmp_path: Path) -> None:
    run_dir = tmp_path / "criterion-0123"
    summary = {
        "run_id": "criterion-0123",
        "result": {"sweep": [{"eps": 0.1, "gap": 0.2}, {"eps": 0.05, "gap": 0.06}]},
    }
    dump_json(summary, run_dir / "summary.json")
    assert summary_table(summary) == summary["result"]["sweep"]
    destination = export_csv(run_dir)
    assert destination == run_dir / "sweep.csv"
    assert destination.read_text(encoding="utf-8").splitlines()[0] == "eps,gap"


def test_export_csv_requires_table(tmp_path: Path) -> None:
    run_dir = tmp_path / "constants-0123"
    with pytest.raises(ValidationError):
        export_csv(run_dir)
    dump_json({"result": {"A": 1.0}}, run_dir / "summary.json")
    with pytest.raises(ValidationError):
        export_csv(run_dir)


def test_reports_render_with_fallback_templates(tmp_path: Path) -> None:
    paths = RunPaths(run_id="energy-feed", base_dir=tmp_path)
    summary = {
        "run_id": "energy-feed",
        "command": "energy",
        "config": {"threads": 1},
        "config_hash": "feed",
        "version": "0.1.0",
        "status": "PASS",
        "result": {"E": 1.25, "gap": -0.5, "nested": {"skip": True}},
    }
    rows = [{"eps": 0.1, "gap": 0.5}]
    render_reports(summary, rows, paths)
    markdown = paths.markdown_report_path.read_text(encoding="utf-8")
    html = paths.html_report_path.read_text(encoding="utf-8")
    assert "# scalarflat report: energy" in markdown
    assert "| E | 1.25 |" in markdown
    assert "nested" not in markdown
    assert "| eps | gap |" in markdown
    assert "<td>0.5</td>" in html
