"""
Report Writer
Builds versioned, schema-checked JSON reports with an embedded run manifest
"""
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Union

import numpy as np
from jsonschema import Draft7Validator

from components.errors import ContractError
from config.data_config import ArtifactPaths

SCHEMA_VERSION = 1
TOOL_VERSION = "1.0.0"
VOLATILE_KEYS = frozenset({"started_at", "finished_at", "wall_time_s"})

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}
_NULLABLE_NUMBER = {"type": ["number", "null"]}

XPER_RESULT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["metric", "feature_names", "pm", "phi0", "phi", "estimator", "efficiency_residual"],
    "properties": {
        "metric": {"type": "string"},
        "feature_names": {"type": "array", "items": {"type": "string"}},
        "pm": {"type": "number"},
        "raw_pm": {"type": "number"},
        "phi0": {"type": "number"},
        "phi": _NUMBER_LIST,
        "shares": {"type": ["array", "null"], "items": {"type": "number"}},
        "estimator": {"enum": ["exact", "wls"]},
        "efficiency_residual": {"type": "number"},
        "individual": {
            "type": "object",
            "required": ["phi0", "phi", "contribution", "prediction"],
            "properties": {
                "phi0": _NUMBER_LIST,
                "phi": {"type": "array", "items": _NUMBER_LIST},
                "contribution": _NUMBER_LIST,
                "prediction": _NUMBER_LIST,
            },
        },
    },
}

REPORT_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema", "command", "manifest", "result", "digest"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "command": {"enum": ["decompose", "simulate", "boost", "oracle"]},
        "digest": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "manifest": {
            "type": "object",
            "required": ["subcommand", "flags", "seeds", "inputs", "tool_version", "started_at", "finished_at"],
            "properties": {
                "subcommand": {"type": "string"},
                "flags": {"type": "object"},
                "seeds": {"type": "object"},
                "inputs": {"type": "object", "additionalProperties": {"type": "string"}},
                "tool_version": {"type": "string"},
            },
        },
        "result": {"type": "object"},
    },
    "allOf": [
        {
            "if": {"properties": {"command": {"const": "decompose"}}},
            "then": {"properties": {"result": XPER_RESULT_SCHEMA}},
        },
        {
            "if": {"properties": {"command": {"const": "boost"}}},
            "then": {"properties": {"result": {"type": "object", "required": ["table", "columns"]}}},
        },
        {
            "if": {"properties": {"command": {"const": "oracle"}}},
            "then": {"properties": {"result": {"type": "object", "required": ["closed_form", "xper_vs_shap"]}}},
        },
    ],
}

_validator = Draft7Validator(REPORT_SCHEMA)


def file_digest(path: Union[str, Path]) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            sha.update(block)
    return sha.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Everything needed to rerun a command: resolved flags, seeds and input digests"""

    subcommand: str
    flags: Dict[str, Any] = field(default_factory=dict)
    seeds: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    tool_version: str = TOOL_VERSION
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None

    def add_input(self, path: Union[str, Path]) -> "RunManifest":
        self.inputs[str(path)] = file_digest(path)
        return self

    def finish(self) -> "RunManifest":
        self.finished_at = _now()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; numpy scalars and arrays unwrapped, non-finite floats mapped to null"""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def _strip_volatile(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _strip_volatile(item) for key, item in value.items() if key not in VOLATILE_KEYS}
    if isinstance(value, list):
        return [_strip_volatile(item) for item in value]
    return value


def report_digest(report: Dict[str, Any]) -> str:
    """sha256 over the canonical report without the digest, timestamps and wall-clock times"""
    body = {key: item for key, item in report.items() if key != "digest"}
    canonical = json.dumps(_strip_volatile(body), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def validate_report(report: Dict[str, Any]) -> Dict[str, Any]:
    errors = sorted(_validator.iter_errors(report), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        location = "/".join(str(part) for part in first.absolute_path) or "<root>"
        raise ContractError(f"report does not match schema {SCHEMA_VERSION} at {location}: {first.message}")
    return report


class ReportBuilder:
    """Fluent builder for command reports"""

    def __init__(self, command: str):
        self.command = command
        self.manifest = RunManifest(subcommand=command)
        self.result: Dict[str, Any] = {}
        self.actions: List[str] = []

    def with_flags(self, flags: Dict[str, Any]) -> "ReportBuilder":
        """Record resolved flags"""
        self.manifest.flags.update(flags)
        self.actions.append(f"Recorded flags: {sorted(flags)}")
        return self

    def with_seed(self, name: str, seed: Optional[int]) -> "ReportBuilder":
        self.manifest.seeds[name] = seed
        self.actions.append(f"Recorded seed {name}={seed}")
        return self

    def with_input(self, path: Union[str, Path]) -> "ReportBuilder":
        """Record an input file with its sha256 digest"""
        self.manifest.add_input(path)
        self.actions.append(f"Added input: {path}")
        return self

    def with_result(self, result: Dict[str, Any]) -> "ReportBuilder":
        self.result = result
        self.actions.append("Attached result")
        return self

    def build(self) -> Dict[str, Any]:
        """Finish the manifest, compute the digest and validate against the schema"""
        self.manifest.finish()
        report = to_jsonable({
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "manifest": self.manifest.to_dict(),
            "result": self.result,
        })
        report["digest"] = report_digest(report)
        return validate_report(report)

    def get_actions(self) -> list:
        return self.actions.copy()


def dumps_report(report: Dict[str, Any]) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def write_report(report: Dict[str, Any], path: Optional[Union[str, Path]] = None,
                 stream: Optional[TextIO] = None) -> Optional[Path]:
    """Write to ``path`` when given, otherwise to ``stream`` (stdout by default)"""
    text = dumps_report(report)
    if path is None:
        (stream or sys.stdout).write(text)
        return None
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(text, encoding="utf-8")
    return file_path


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    file_path = Path(path)
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Report file not found: {file_path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in report file {file_path}: {e}")


def write_study_artifacts(draws, summary: Dict[str, Any], scenario: str,
                          paths: Optional[ArtifactPaths] = None) -> Dict[str, Path]:
    """Tidy draws CSV and JSON summary under the artifact directory"""
    paths = paths or ArtifactPaths()
    paths.ensure_dir()
    draws_path = paths.get_file_path("draws", scenario)
    summary_path = paths.get_file_path("summary", scenario)
    draws.to_csv(draws_path, index=False, encoding="utf-8")
    summary_path.write_text(json.dumps(to_jsonable(summary), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return {"draws": draws_path, "summary": summary_path}
