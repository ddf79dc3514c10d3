# tests/test_reporting.py
"""
Unit tests for the CSV writers.
"""
import numpy as np
import pandas as pd
import pytest

from src.evaluation.metrics import ComponentMetrics, MetricsBundle, undefined_bundle
from src.synthesis.reporting import (
    metrics_table,
    write_field_csv,
    write_metrics_csv,
    write_sweep_csv,
    write_training_log,
)
from src.training.loop import OptimizationTrace


def bundle(r2, rmse):
    part = ComponentMetrics(r2, rmse, r2, rmse)
    return MetricsBundle(part, part, part)


class TestMetricsCsv:
    """Test the evaluation report."""

    def test_table_dims(self):
        """Test the (method, component, metric) layout."""
        table = metrics_table({"flare": bundle(0.9, 0.1), "nearest": bundle(0.5, 0.3)})
        assert table.dims == ("method", "component", "metric")
        assert table.shape == (2, 3, 4)
        assert float(table.sel(method="nearest", component="u_y", metric="rmse")) == 0.3

    def test_rows_and_order(self, tmp_path):
        """Test one row per method and component, methods in insertion order."""
        path = write_metrics_csv(
            {"lamp": bundle(0.8, 0.2), "flare": bundle(0.9, 0.1)}, tmp_path / "m.csv", split="random"
        )
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["method", "split", "component", "r2", "rmse", "wr2", "wrmse"]
        assert list(frame["method"]) == ["lamp"] * 3 + ["flare"] * 3
        assert list(frame["component"]) == ["u_x", "u_y", "u_z"] * 2
        assert set(frame["split"]) == {"random"}

    def test_undefined_written_as_text(self, tmp_path):
        """Test that undefined metrics are spelled out."""
        path = write_metrics_csv({"flare": bundle(None, 0.1)}, tmp_path / "m.csv", split="trim")
        lines = path.read_text().splitlines()
        assert lines[1] == "flare,trim,u_x,undefined,0.10000000000000001,undefined,0.10000000000000001"

    def test_invalid_row_rejected(self, tmp_path):
        """Test that a negative RMSE fails row validation and nothing is written."""
        path = tmp_path / "m.csv"
        with pytest.raises(ValueError, match="rmse must be non-negative"):
            write_metrics_csv({"flare": bundle(0.9, -0.1)}, path, split="random")
        assert not path.exists()

    def test_unpredicted_method_is_all_undefined(self, tmp_path):
        """Test that a method with no defined metrics is written as undefined."""
        path = write_metrics_csv({"nearest": undefined_bundle()}, tmp_path / "m.csv", split="trim")
        assert path.read_text().splitlines()[1] == "nearest,trim,u_x,undefined,undefined,undefined,undefined"


class TestOtherWriters:
    """Test the sweep, training log and field writers."""

    def test_sweep_has_std_columns(self, tmp_path):
        """Test mean and spread columns per size."""
        means = {4: {"flare": bundle(0.9, 0.1)}, 8: {"flare": bundle(0.95, 0.05)}}
        spreads = {4: {"flare": bundle(0.01, 0.02)}, 8: {"flare": bundle(0.0, 0.01)}}
        frame = pd.read_csv(write_sweep_csv(means, spreads, tmp_path / "s.csv"))
        assert list(frame["size"]) == [4, 4, 4, 8, 8, 8]
        assert "r2_std" in frame.columns
        assert frame.loc[0, "rmse_std"] == 0.02

    def test_training_log(self, tmp_path):
        """Test one row per epoch per phase."""
        traces = [
            OptimizationTrace("base:s0000", [3.0, 2.0], [1e-4, 2e-4]),
            OptimizationTrace("joint:flare", [5.0], [1e-3]),
        ]
        frame = pd.read_csv(write_training_log(traces, tmp_path / "log.csv"))
        assert list(frame.columns) == ["phase", "epoch", "loss", "lr"]
        assert list(frame["phase"]) == ["base:s0000", "base:s0000", "joint:flare"]
        assert list(frame["epoch"]) == [0, 1, 0]

    def test_field_csv_optional_columns(self, tmp_path):
        """Test physical coordinates and the feasibility column."""
        coords = np.array([[0.9, 0.0, 0.5], [0.3, 0.0, 0.5]])
        path = write_field_csv(tmp_path / "f.csv", coords, np.zeros((2, 3)), coords * 40, 0.75)
        frame = pd.read_csv(path)
        assert list(frame.columns) == [
            "x_u", "y_u", "z_u", "x_mm", "y_mm", "z_mm", "u_x", "u_y", "u_z", "p_feasible"
        ]
        assert list(frame["p_feasible"]) == [0.75, 0.75]
