# tests/test_storage.py
"""
Unit tests for the dataset, checkpoint and split file formats.
"""
import json

import numpy as np
import pytest

from src.data.splits import build_split
from src.data.storage import (
    load_checkpoint,
    load_dataset,
    load_split,
    read_points,
    save_checkpoint,
    save_dataset,
    save_split,
    write_points,
)
from src.errors import FormatError, VersionMismatch


class TestPointFiles:
    """Test the binary point file."""

    def test_round_trip(self, tmp_path, rng):
        """Test that coordinates and values come back bit-identical."""
        coords, values = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        write_points(tmp_path / "p.fld", coords, values)
        back_coords, back_values = read_points(tmp_path / "p.fld")
        np.testing.assert_array_equal(back_coords, coords)
        np.testing.assert_array_equal(back_values, values)

    def test_layout(self, tmp_path):
        """Test the magic, the count and the row size."""
        write_points(tmp_path / "p.fld", np.zeros((2, 3)), np.ones((2, 3)))
        data = (tmp_path / "p.fld").read_bytes()
        assert data[:4] == b"FLD1"
        assert int.from_bytes(data[4:8], "little") == 2
        assert len(data) == 8 + 2 * 6 * 8

    def test_truncated(self, tmp_path):
        """Test that a short file is a format error."""
        write_points(tmp_path / "p.fld", np.zeros((2, 3)), np.ones((2, 3)))
        path = tmp_path / "p.fld"
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(FormatError):
            read_points(path)


class TestDatasetDirectory:
    """Test save_dataset() / load_dataset()."""

    def test_round_trip(self, small_dataset, tmp_path):
        """Test that every sample survives with its parameters, points and label."""
        loaded = load_dataset(save_dataset(small_dataset, tmp_path / "data"))
        assert loaded.ids == small_dataset.ids
        assert loaded.family == small_dataset.family
        for a, b in zip(loaded.samples, small_dataset.samples):
            np.testing.assert_array_equal(a.params, b.params)
            np.testing.assert_array_equal(a.targets, b.targets)
            assert a.feasible == b.feasible

    def test_manifest_names_parameters(self, small_dataset, tmp_path):
        """Test that parameters are stored by name."""
        save_dataset(small_dataset, tmp_path / "data")
        manifest = json.loads((tmp_path / "data" / "manifest.json").read_text())
        assert set(manifest["samples"][0]["params"]) == {
            "r_out", "t_out", "r_in", "t_in", "h", "power", "velocity"
        }

    def test_version_mismatch(self, small_dataset, tmp_path):
        """Test that an unknown manifest version is refused."""
        directory = save_dataset(small_dataset, tmp_path / "data")
        manifest = json.loads((directory / "manifest.json").read_text())
        manifest["version"] = 2
        (directory / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(VersionMismatch):
            load_dataset(directory)

    def test_invalid_entry(self, small_dataset, tmp_path):
        """Test that a manifest entry without a parameter is a format error."""
        directory = save_dataset(small_dataset, tmp_path / "data")
        manifest = json.loads((directory / "manifest.json").read_text())
        del manifest["samples"][0]["params"]["h"]
        (directory / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(FormatError):
            load_dataset(directory)

    def test_missing_point_file(self, small_dataset, tmp_path):
        """Test that a deleted point file is reported as a format error."""
        directory = save_dataset(small_dataset, tmp_path / "data")
        (directory / "points" / f"{small_dataset.ids[0]}.fld").unlink()
        with pytest.raises(FormatError):
            load_dataset(directory)

    def test_missing_manifest(self, tmp_path):
        """Test that a directory without a manifest is refused."""
        with pytest.raises(FormatError):
            load_dataset(tmp_path)


class TestCheckpoints:
    """Test the weight checkpoint and its sidecar."""

    def test_round_trip(self, tmp_path, rng):
        """Test columns, layout and sidecar metadata."""
        columns = rng.normal(size=(11, 3))
        path = save_checkpoint(tmp_path / "m.flw", "flare", 2, (15, 4, 3), columns, {"note": "x"})
        ckpt = load_checkpoint(path)
        assert ckpt.kind == "flare"
        assert ckpt.octaves == 2
        assert ckpt.widths == (15, 4, 3)
        assert ckpt.meta == {"note": "x"}
        np.testing.assert_array_equal(ckpt.columns, columns)

    def test_columns_are_contiguous(self, tmp_path):
        """Test that the payload stores one network after another."""
        columns = np.array([[1.0, 3.0], [2.0, 4.0]])
        path = save_checkpoint(tmp_path / "m.flw", "lamp", 0, (3, 3), columns, {})
        payload = np.frombuffer(path.read_bytes()[-32:], dtype="<f8")
        np.testing.assert_array_equal(payload, [1.0, 2.0, 3.0, 4.0])

    def test_bad_magic(self, tmp_path):
        """Test that a foreign file is refused."""
        path = tmp_path / "m.flw"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        """Test that a newer checkpoint version is refused."""
        path = save_checkpoint(tmp_path / "m.flw", "flare", 0, (3, 3), np.ones((2, 1)), {})
        data = bytearray(path.read_bytes())
        data[4:8] = (2).to_bytes(4, "little")
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatch):
            load_checkpoint(path)

    def test_missing_sidecar(self, tmp_path):
        """Test that a checkpoint without its sidecar is incomplete."""
        path = save_checkpoint(tmp_path / "m.flw", "flare", 0, (3, 3), np.ones((2, 1)), {})
        (tmp_path / "m.flw.json").unlink()
        with pytest.raises(FormatError):
            load_checkpoint(path)


class TestSplitFiles:
    """Test save_split() / load_split()."""

    def test_round_trip(self, small_dataset, tmp_path):
        """Test that a saved split loads back equal."""
        split = build_split(small_dataset, "greedy", seed=2, size=3)
        assert load_split(save_split(split, tmp_path / "split.json")) == split

    def test_overlapping_ids_rejected(self, tmp_path):
        """Test that a hand-edited split with shared ids is invalid."""
        path = tmp_path / "split.json"
        path.write_text(json.dumps({"kind": "random", "train_ids": ["a"], "test_ids": ["a"], "seed": 0}))
        with pytest.raises(FormatError):
            load_split(path)

    def test_invalid_json(self, tmp_path):
        """Test that broken JSON is a format error."""
        path = tmp_path / "split.json"
        path.write_text("{")
        with pytest.raises(FormatError):
            load_split(path)
