# src/evaluation/metrics.py
"""
Per-component R^2 and RMSE plus their squared-value-weighted variants.

Weights are w_i = y_i^2 / sum_j y_j^2, so near-zero regions of the field count
less. Weighted R^2 measures deviations from the weighted mean sum_k w_k y_k.
An undefined metric (zero variance, all-zero targets) is None.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from src.errors import DegenerateTargets, ShapeMismatch

logger = logging.getLogger("FLARE Metrics")

COMPONENTS = ("u_x", "u_y", "u_z")
METRIC_NAMES = ("r2", "rmse", "wr2", "wrmse")


@dataclass(frozen=True)
class ComponentMetrics:
    r2: Optional[float]
    rmse: Optional[float]
    weighted_r2: Optional[float]
    weighted_rmse: Optional[float]

    def as_row(self) -> dict:
        return {
            "r2": self.r2,
            "rmse": self.rmse,
            "wr2": self.weighted_r2,
            "wrmse": self.weighted_rmse,
        }


@dataclass(frozen=True)
class MetricsBundle:
    u_x: ComponentMetrics
    u_y: ComponentMetrics
    u_z: ComponentMetrics

    def component(self, name: str) -> ComponentMetrics:
        return getattr(self, name)

    def rows(self) -> list[dict]:
        return [{"component": c, **self.component(c).as_row()} for c in COMPONENTS]

    def to_dict(self) -> dict:
        return asdict(self)


def undefined_bundle() -> MetricsBundle:
    """Placeholder for a sample a method could not predict; every metric is None."""
    part = ComponentMetrics(None, None, None, None)
    return MetricsBundle(part, part, part)


def _component(y: np.ndarray, y_hat: np.ndarray, name: str, strict: bool) -> ComponentMetrics:
    err = y - y_hat
    sse = float(np.sum(err * err))
    rmse = float(np.sqrt(sse / y.size))

    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else None

    total = float(np.sum(y * y))
    if total > 0:
        w = (y * y) / total
        weighted_rmse = float(np.sqrt(np.sum(w * err * err)))
        w_mean = float(np.sum(w * y))
        w_sst = float(np.sum(w * (y - w_mean) ** 2))
        weighted_r2 = 1.0 - float(np.sum(w * err * err)) / w_sst if w_sst > 0 else None
    else:
        weighted_rmse = weighted_r2 = None

    if r2 is None or weighted_r2 is None:
        message = f"{name}: targets have zero (weighted) variance, R^2 undefined"
        if strict:
            raise DegenerateTargets(message)
        logger.warning(message)
    return ComponentMetrics(r2, rmse, weighted_r2, weighted_rmse)


def evaluate(y_true, y_pred, strict: bool = False) -> MetricsBundle:
    """
    Metrics per displacement component.

    Raises:
        ShapeMismatch: unless both arrays are (n >= 2, 3)
        DegenerateTargets: with strict=True, when a component's R^2 is undefined
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 2 or y_true.shape[1] != 3:
        raise ShapeMismatch(f"expected matching (n, 3) arrays, got {y_true.shape} and {y_pred.shape}")
    if y_true.shape[0] < 2:
        raise ShapeMismatch("metrics need at least 2 points")
    parts = [_component(y_true[:, c], y_pred[:, c], name, strict) for c, name in enumerate(COMPONENTS)]
    return MetricsBundle(*parts)


def _mean_defined(values: list[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def _std_defined(values: list[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.std(defined)) if defined else None


def _reduce(bundles: Sequence[MetricsBundle], reducer) -> MetricsBundle:
    if not bundles:
        raise ShapeMismatch("cannot aggregate an empty list of metric bundles")
    parts = []
    for name in COMPONENTS:
        comps = [b.component(name) for b in bundles]
        parts.append(
            ComponentMetrics(
                r2=reducer([c.r2 for c in comps]),
                rmse=reducer([c.rmse for c in comps]),
                weighted_r2=reducer([c.weighted_r2 for c in comps]),
                weighted_rmse=reducer([c.weighted_rmse for c in comps]),
            )
        )
    return MetricsBundle(*parts)


def average_bundles(bundles: Sequence[MetricsBundle]) -> MetricsBundle:
    """Unweighted mean over test samples, skipping undefined entries."""
    return _reduce(bundles, _mean_defined)


def spread_bundles(bundles: Sequence[MetricsBundle]) -> MetricsBundle:
    """Population standard deviation over test samples, skipping undefined entries."""
    return _reduce(bundles, _std_defined)


def node_errors(coords, y_true, y_pred) -> dict[str, np.ndarray]:
    """Per-node truth, prediction and absolute error columns for one sample."""
    coords = np.asarray(coords, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if not coords.shape == y_true.shape == y_pred.shape:
        raise ShapeMismatch("coords, truth and prediction must share one (n, 3) shape")
    columns = {"x_u": coords[:, 0], "y_u": coords[:, 1], "z_u": coords[:, 2]}
    for c, name in enumerate(COMPONENTS):
        columns[f"{name}_true"] = y_true[:, c]
        columns[f"{name}_pred"] = y_pred[:, c]
        columns[f"{name}_abs_err"] = np.abs(y_true[:, c] - y_pred[:, c])
    return columns
