# src/models.py
"""
JSON record models for the FLARE toolkit.
Run manifests, split records, metric rows and dataset manifest entries, each
with a validation function returning (is_valid, error_messages).
"""
import json
import math
from typing import Any, Optional, TypedDict

from src import __version__
from src.data.dataset import PARAMETER_NAMES

VALID_COMMANDS = {
    "generate",
    "split",
    "train",
    "infer",
    "eval",
    "sweep",
    "feasibility",
}

VALID_SPLIT_KINDS = {"random", "greedy", "trim"}
VALID_ORIGINS = {"lhs", "corner"}
METRIC_COLUMNS = ("r2", "rmse", "wr2", "wrmse")


class SampleEntry(TypedDict, total=False):
    """One sample in a dataset manifest."""
    id: str
    params: dict[str, float]
    feasible: Optional[bool]
    origin: str
    file: str
    n_points: int


class SplitRecord(TypedDict, total=False):
    """Saved train/test split."""
    kind: str
    train_ids: list[str]
    test_ids: list[str]
    seed: int
    size: Optional[int]
    trim_fraction: Optional[float]


class MetricRow(TypedDict, total=False):
    """One CSV row of an evaluation report."""
    method: str
    split: str
    component: str
    r2: Optional[float]
    rmse: Optional[float]
    wr2: Optional[float]
    wrmse: Optional[float]


class RunManifest(TypedDict, total=False):
    """
    Everything needed to re-run a command: argv, resolved seeds and config,
    and the artifacts it wrote. No timestamps, so reruns are byte-identical.
    """
    command: str
    argv: list[str]
    seed: int
    code_version: str
    config: dict[str, Any]
    stage_seeds: dict[str, int]
    outputs: list[str]


def is_json_serializable(obj: Any) -> bool:
    """
    Check if an object is JSON-serializable.

    Args:
        obj: Object to check

    Returns:
        True if serializable, False otherwise
    """
    try:
        json.dumps(obj)
        return True
    except (TypeError, ValueError):
        return False


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_sample_entry(entry: dict[str, Any]) -> tuple[bool, list[str]]:
    """
    Validate one dataset manifest entry.

    Returns:
        Tuple of (is_valid, error_messages)

    Validation Rules:
    - id must be a non-empty string
    - params must map every parameter name to a finite number
    - feasible must be a boolean or null
    - origin must be "lhs" or "corner"
    - n_points must be a positive integer
    """
    errors = []

    if not isinstance(entry.get("id"), str) or not entry["id"].strip():
        errors.append("id must be a non-empty string")

    params = entry.get("params")
    if not isinstance(params, dict):
        errors.append("params must be an object")
    else:
        for name in PARAMETER_NAMES:
            if name not in params:
                errors.append(f"params missing: {name}")
            elif not _is_number(params[name]) or not math.isfinite(params[name]):
                errors.append(f"params.{name} must be a finite number")

    if "feasible" in entry and entry["feasible"] is not None and not isinstance(entry["feasible"], bool):
        errors.append("feasible must be a boolean or null")

    if entry.get("origin", "lhs") not in VALID_ORIGINS:
        errors.append(f"origin must be one of {sorted(VALID_ORIGINS)}, got: {entry.get('origin')}")

    if not _is_int(entry.get("n_points")) or entry["n_points"] < 1:
        errors.append("n_points must be a positive integer")

    return len(errors) == 0, errors


def validate_split_record(record: dict[str, Any]) -> tuple[bool, list[str]]:
    """
    Validate a saved split.

    Validation Rules:
    - kind must be a known split kind
    - train_ids must be a non-empty list of strings, test_ids a list of strings
    - train and test ids must be disjoint
    - seed must be an integer
    """
    errors = []

    if record.get("kind") not in VALID_SPLIT_KINDS:
        errors.append(f"kind must be one of {sorted(VALID_SPLIT_KINDS)}, got: {record.get('kind')}")

    for key in ("train_ids", "test_ids"):
        ids = record.get(key)
        if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
            errors.append(f"{key} must be a list of strings")
    if isinstance(record.get("train_ids"), list):
        if len(record["train_ids"]) == 0:
            errors.append("train_ids cannot be empty")
        if isinstance(record.get("test_ids"), list):
            overlap = set(record["train_ids"]) & set(record["test_ids"])
            if overlap:
                errors.append(f"train and test ids overlap: {sorted(overlap)[:5]}")

    if not _is_int(record.get("seed")):
        errors.append("seed must be an integer")

    return len(errors) == 0, errors


def validate_metric_row(row: dict[str, Any]) -> tuple[bool, list[str]]:
    """
    Validate a metric row.

    Validation Rules:
    - method, split and component must be non-empty strings
    - each metric is a number or None (undefined)
    - rmse and wrmse must be non-negative when defined
    """
    errors = []
    for key in ("method", "split", "component"):
        if not isinstance(row.get(key), str) or not row[key]:
            errors.append(f"{key} must be a non-empty string")

    for key in METRIC_COLUMNS:
        value = row.get(key)
        if value is None:
            continue
        if not _is_number(value):
            errors.append(f"{key} must be a number or undefined")
        elif key in ("rmse", "wrmse") and value < 0:
            errors.append(f"{key} must be non-negative")

    return len(errors) == 0, errors


def validate_run_manifest(manifest: dict[str, Any]) -> tuple[bool, list[str]]:
    """
    Validate a run manifest for correctness and serializability.

    Validation Rules:
    - command must be a known subcommand
    - argv must be a list of strings
    - seed must be an integer
    - outputs must be a list of strings
    - all values must be JSON-serializable
    """
    errors = []

    if manifest.get("command") not in VALID_COMMANDS:
        errors.append(f"command must be one of {sorted(VALID_COMMANDS)}, got: {manifest.get('command')}")

    argv = manifest.get("argv")
    if not isinstance(argv, list) or not all(isinstance(a, str) for a in argv):
        errors.append("argv must be a list of strings")

    if "seed" in manifest and not _is_int(manifest["seed"]):
        errors.append("seed must be an integer")

    if "outputs" in manifest:
        outputs = manifest["outputs"]
        if not isinstance(outputs, list) or not all(isinstance(o, str) for o in outputs):
            errors.append("outputs must be a list of strings")

    for key, value in manifest.items():
        if not is_json_serializable(value):
            errors.append(f"Field '{key}' is not JSON-serializable")

    return len(errors) == 0, errors


def initialize_run_manifest(command: str, argv: list[str], seed: int = 0) -> RunManifest:
    """
    Raises:
        ValueError: If the command is unknown
    """
    if command not in VALID_COMMANDS:
        raise ValueError(f"command must be one of {sorted(VALID_COMMANDS)}, got: {command}")
    return {
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "code_version": __version__,
        "config": {},
        "stage_seeds": {},
        "outputs": [],
    }


def update_run_manifest(manifest: RunManifest, **updates: Any) -> RunManifest:
    """
    Update a run manifest with new values and validate.

    Raises:
        ValueError: If updates result in an invalid manifest
    """
    updated = {**manifest, **updates}
    is_valid, errors = validate_run_manifest(updated)
    if not is_valid:
        raise ValueError(f"Invalid run manifest update: {'; '.join(errors)}")
    return updated
