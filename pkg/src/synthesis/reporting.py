# src/synthesis/reporting.py
"""
CSV and manifest artifacts. Metric tables are built as xarray DataArrays with
dims (method, component, metric) and flattened through pandas; undefined
metrics are written as "undefined".
"""
import logging
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import xarray as xr

from src.data.storage import dump_json
from src.evaluation.metrics import COMPONENTS, METRIC_NAMES, MetricsBundle
from src.models import MetricRow, validate_metric_row
from src.training.loop import OptimizationTrace

logger = logging.getLogger("FLARE Reporting")

UNDEFINED = "undefined"
FLOAT_FORMAT = "%.17g"


def _to_csv(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep=UNDEFINED, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def _bundle_values(bundle: MetricsBundle) -> np.ndarray:
    rows = []
    for name in COMPONENTS:
        row = bundle.component(name).as_row()
        rows.append([np.nan if row[m] is None else row[m] for m in METRIC_NAMES])
    return np.array(rows, dtype=np.float64)


def metrics_table(results: Mapping[str, MetricsBundle]) -> xr.DataArray:
    """Stack per-method bundles into a (method, component, metric) array; NaN marks undefined."""
    methods = list(results)
    return xr.DataArray(
        np.stack([_bundle_values(results[m]) for m in methods]) if methods else np.empty((0, 3, 4)),
        dims=("method", "component", "metric"),
        coords={"method": methods, "component": list(COMPONENTS), "metric": list(METRIC_NAMES)},
        name="value",
    )


def metrics_frame(table: xr.DataArray, **labels) -> pd.DataFrame:
    """Long-to-wide: one row per (method, component), metric columns, extra label columns in front."""
    frame = table.to_series().unstack("metric").reset_index()
    frame = frame[["method", "component", *METRIC_NAMES]]
    for position, (key, value) in enumerate(labels.items(), start=1):
        frame.insert(position, key, value)
    # unstack sorts its index; restore insertion order of methods and components
    order = {m: i for i, m in enumerate(table.coords["method"].values)}
    comp_order = {c: i for i, c in enumerate(COMPONENTS)}
    frame = frame.sort_values(
        by=["method", "component"],
        key=lambda col: col.map(order) if col.name == "method" else col.map(comp_order),
        kind="stable",
    )
    return frame.reset_index(drop=True)


def write_metrics_csv(results: Mapping[str, MetricsBundle], path, split: str) -> Path:
    """
    Rows: method, split, component, r2, rmse, wr2, wrmse.

    Raises:
        ValueError: if a row fails validate_metric_row
    """
    errors = []
    for method, bundle in results.items():
        for row in bundle.rows():
            record: MetricRow = {"method": method, "split": split, **row}
            _, row_errors = validate_metric_row(record)
            errors += [f"{method}/{row['component']}: {e}" for e in row_errors]
    if errors:
        raise ValueError(f"Invalid metric rows: {'; '.join(errors)}")
    return _to_csv(metrics_frame(metrics_table(results), split=split), path)


def write_sweep_csv(
    means: Mapping[int, Mapping[str, MetricsBundle]],
    spreads: Mapping[int, Mapping[str, MetricsBundle]],
    path,
) -> Path:
    """One row per (size, method, component) with mean metrics and their *_std columns."""
    frames = []
    for size in sorted(means):
        mean = metrics_frame(metrics_table(means[size]), size=size)
        std = metrics_frame(metrics_table(spreads[size]), size=size)
        for metric in METRIC_NAMES:
            mean[f"{metric}_std"] = std[metric].to_numpy()
        frames.append(mean)
    return _to_csv(pd.concat(frames, ignore_index=True), path)


def write_training_log(traces: Sequence[OptimizationTrace], path) -> Path:
    frames = [
        pd.DataFrame(
            {
                "phase": trace.label,
                "epoch": np.arange(trace.epochs),
                "loss": trace.losses,
                "lr": trace.learning_rates,
            }
        )
        for trace in traces
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["phase", "epoch", "loss", "lr"]
    )
    return _to_csv(frame, path)


def write_field_csv(path, coords, values, physical=None, probability=None) -> Path:
    """Unit coordinates (and optionally physical ones) with the predicted displacement."""
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    columns = {"x_u": coords[:, 0], "y_u": coords[:, 1], "z_u": coords[:, 2]}
    if physical is not None:
        physical = np.asarray(physical, dtype=np.float64)
        columns.update({"x_mm": physical[:, 0], "y_mm": physical[:, 1], "z_mm": physical[:, 2]})
    for c, name in enumerate(COMPONENTS):
        columns[name] = values[:, c]
    if probability is not None:
        columns["p_feasible"] = np.full(len(coords), float(probability))
    return _to_csv(pd.DataFrame(columns), path)


def write_node_errors(columns: Mapping[str, np.ndarray], path) -> Path:
    return _to_csv(pd.DataFrame(dict(columns)), path)


def write_table(rows: Sequence[dict], path) -> Path:
    return _to_csv(pd.DataFrame(list(rows)), path)


def write_run_manifest(manifest: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_json(manifest, path)
    logger.info(f"Run manifest saved to {path}")
    return path
