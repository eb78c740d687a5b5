"""
Versioned JSON reports: manifest, digest, schema validation and study artifacts
"""
import hashlib
import io
import json

import numpy as np
import pandas as pd
import pytest

from components.errors import ContractError
from components.metrics import get_metric
from components.xper_exact import xper_exact
from config.data_config import ArtifactPaths
from utils.report_writer import (
    SCHEMA_VERSION,
    TOOL_VERSION,
    ReportBuilder,
    file_digest,
    load_report,
    report_digest,
    to_jsonable,
    validate_report,
    write_report,
    write_study_artifacts,
)


@pytest.mark.smoke
def test_decompose_report_validates(small_regression):
    report = _decompose_report(small_regression)

    assert report["schema"] == SCHEMA_VERSION
    assert report["manifest"]["tool_version"] == TOOL_VERSION
    assert report["manifest"]["seeds"] == {"wls": None}
    assert report["digest"] == report_digest(report)


def test_digest_ignores_timestamps(small_regression):
    report = _decompose_report(small_regression)
    shifted = json.loads(json.dumps(report))
    shifted["manifest"]["started_at"] = "1999-01-01T00:00:00+00:00"
    shifted["manifest"]["finished_at"] = None

    assert report_digest(shifted) == report["digest"]
    shifted["result"]["phi0"] += 1e-9
    assert report_digest(shifted) != report["digest"]


def test_rebuilt_report_has_same_digest(small_regression):
    assert _decompose_report(small_regression)["digest"] == _decompose_report(small_regression)["digest"]


def test_input_files_are_hashed(tmp_path):
    data = tmp_path / "input.csv"
    data.write_text("x1,y\n1,2\n", encoding="utf-8")
    builder = ReportBuilder("boost").with_input(data).with_result({"table": {}, "columns": {}})
    report = builder.build()

    assert report["manifest"]["inputs"] == {str(data): hashlib.sha256(b"x1,y\n1,2\n").hexdigest()}
    assert file_digest(data) == report["manifest"]["inputs"][str(data)]
    assert builder.get_actions()[0] == f"Added input: {data}"


def test_schema_rejects_incomplete_results():
    with pytest.raises(ContractError, match="result"):
        ReportBuilder("decompose").with_result({"metric": "mse"}).build()
    with pytest.raises(ContractError, match="result"):
        ReportBuilder("oracle").with_result({"closed_form": []}).build()


def test_schema_rejects_unknown_command(small_regression):
    report = _decompose_report(small_regression)
    report["command"] = "explain"
    with pytest.raises(ContractError, match="command"):
        validate_report(report)


def test_jsonable_conversion():
    converted = to_jsonable({"a": np.array([1.0, np.nan]), "b": np.int64(3), "c": (np.bool_(True),)})
    assert converted == {"a": [1.0, None], "b": 3, "c": [True]}


def test_write_and_load_round_trip(small_regression, tmp_path):
    report = _decompose_report(small_regression)
    path = write_report(report, tmp_path / "nested" / "report.json")
    assert load_report(path) == report

    stream = io.StringIO()
    assert write_report(report, stream=stream) is None
    assert json.loads(stream.getvalue()) == report


def test_load_report_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_report(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ValueError, match="Invalid JSON"):
        load_report(broken)


def test_study_artifacts(tmp_path):
    draws = pd.DataFrame({"replication": [0, 0], "partition": ["test", "test"], "quantity": ["pm", "phi0"],
                          "feature": ["", ""], "value": [0.7, 0.5]})
    summary = {"scenario": "probit_baseline", "pm": {"mean": np.float64(0.7), "std": np.nan}}
    paths = write_study_artifacts(draws, summary, "probit_baseline", ArtifactPaths(output_dir=tmp_path / "out"))

    assert paths["draws"].name == "probit_baseline_draws.csv"
    assert pd.read_csv(paths["draws"], keep_default_na=False)["quantity"].tolist() == ["pm", "phi0"]
    assert json.loads(paths["summary"].read_text(encoding="utf-8"))["pm"] == {"mean": 0.7, "std": None}


# Helpers
def _decompose_report(small_regression):
    sample, model = small_regression
    result = xper_exact(sample, model, get_metric("mse")).to_dict()
    return (
        ReportBuilder("decompose")
        .with_flags({"metric": "mse", "method": "exact"})
        .with_seed("wls", None)
        .with_result(result)
        .build()
    )
