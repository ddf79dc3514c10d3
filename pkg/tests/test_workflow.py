# tests/test_workflow.py
"""
End-to-end tests of the command-line workflow on tiny datasets and networks.
"""
import json
import logging

import numpy as np
import pandas as pd
import pytest

from src.config import settings
from src.data.sampling import synthetic_field
from src.errors import DegenerateQuery, NonFiniteLoss
from src.main_workflow import manifest_path, run, sweep_sizes
from src.training.surrogates import BaseSurrogate

TINY = [
    "--widths", "8",
    "--octaves", "1",
    "--phase1-epochs", "15",
    "--phase2-epochs", "15",
    "--baseline-epochs", "15",
]
QUERY = "37,8,22,6,0.5,7,7"


@pytest.fixture
def workspace(tmp_path):
    data = tmp_path / "data"
    assert run(["generate", "--count", "10", "--seed", "5", "--points-per-ring", "6", "--out", str(data)]) == 0
    split = tmp_path / "split.json"
    assert run(["split", "--data", str(data), "--kind", "random", "--seed", "5", "--out", str(split)]) == 0
    return tmp_path, data, split


def train(tmp_path, data, split, method, *extra):
    out = tmp_path / f"{method}.flw"
    code = run(
        ["--threads", "1", "train", "--data", str(data), "--split", str(split),
         "--method", method, "--out", str(out), *TINY, *extra]
    )
    return code, out


class TestGenerate:
    """Test the generate command."""

    def test_reruns_are_byte_identical(self, tmp_path):
        """Test that the dataset and its run manifest do not change between runs."""
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["generate", "--count", "4", "--seed", "1", "--points-per-ring", "3", "--out", str(out)]) == 0
            outputs.append(out)
        a, b = outputs
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        for point_file in (a / "points").iterdir():
            assert point_file.read_bytes() == (b / "points" / point_file.name).read_bytes()

    def test_manifest_records_seeds(self, tmp_path):
        """Test the run manifest written beside the output."""
        out = tmp_path / "data"
        run(["generate", "--count", "3", "--seed", "2", "--points-per-ring", "2", "--out", str(out)])
        manifest = json.loads(manifest_path(out).read_text())
        assert manifest["command"] == "generate"
        assert manifest["seed"] == 2
        assert set(manifest["stage_seeds"]) == {"lhs", "corners"}

    def test_replay_reproduces_output(self, tmp_path):
        """Test that replaying a manifest rewrites identical files."""
        out = tmp_path / "data"
        run(["generate", "--count", "3", "--seed", "8", "--points-per-ring", "2", "--out", str(out)])
        before = (out / "manifest.json").read_bytes()
        (out / "manifest.json").unlink()
        assert run(["replay", "--manifest", str(manifest_path(out))]) == 0
        assert (out / "manifest.json").read_bytes() == before


class TestTrainAndEvaluate:
    """Test train, infer and eval on a small dataset."""

    def test_train_flare_then_eval(self, workspace):
        """Test that eval reports FLARE and the nearest-neighbour baseline."""
        tmp_path, data, split = workspace
        code, checkpoint = train(tmp_path, data, split, "flare")
        assert code == 0
        assert checkpoint.exists()
        log = pd.read_csv(checkpoint.with_name("flare.flw.log.csv"))
        assert set(log["phase"].str.split(":").str[0]) == {"base", "joint"}

        report = tmp_path / "metrics.csv"
        assert run(["eval", "--data", str(data), "--split", str(split),
                    "--checkpoint", str(checkpoint), "--out", str(report)]) == 0
        frame = pd.read_csv(report)
        assert list(frame["method"]) == ["flare"] * 3 + ["nearest"] * 3
        assert set(frame["split"]) == {"random"}

    def test_train_manifest_omits_threads(self, workspace):
        """Test that the recorded config does not depend on the machine."""
        tmp_path, data, split = workspace
        _, checkpoint = train(tmp_path, data, split, "lamp")
        manifest = json.loads(manifest_path(checkpoint).read_text())
        assert manifest["config"]["mode"] == "lamp"
        assert manifest["config"]["reg_weight"] == 0.0
        assert "threads" not in manifest["config"]
        assert set(manifest["stage_seeds"]) == {"base-select", "base-init"}

    @pytest.mark.parametrize("method", ["concat", "film", "deeponet"])
    def test_train_baselines(self, workspace, method):
        """Test that every conditional baseline trains and can be evaluated."""
        tmp_path, data, split = workspace
        code, checkpoint = train(tmp_path, data, split, method, "--latent", "4")
        assert code == 0
        report = tmp_path / f"{method}.csv"
        assert run(["eval", "--data", str(data), "--split", str(split),
                    "--checkpoint", str(checkpoint), "--out", str(report)]) == 0
        assert set(pd.read_csv(report)["method"]) == {method}

    def test_infer_writes_field(self, workspace):
        """Test the field CSV for a query with physical coordinates."""
        tmp_path, data, split = workspace
        _, checkpoint = train(tmp_path, data, split, "flare")
        out = tmp_path / "field.csv"
        assert run(["infer", "--checkpoint", str(checkpoint), "--params", QUERY,
                    "--points-per-ring", "5", "--physical", "--out", str(out)]) == 0
        frame = pd.read_csv(out)
        assert len(frame) == 10
        assert {"x_mm", "u_x", "u_z"} <= set(frame.columns)
        radius = np.hypot(frame["x_mm"], frame["y_mm"])
        assert np.all(((radius >= 19) & (radius <= 25)) | ((radius >= 33) & (radius <= 41)))

    def test_perfect_surrogate_scores_one(self, workspace, mocker):
        """Test the report for a surrogate that returns the exact field."""
        tmp_path, data, split = workspace

        class Oracle(BaseSurrogate):
            def predict(self, p_d, coords):
                return synthetic_field(p_d, coords)

        mocker.patch("src.main_workflow.surrogates_for", return_value=[Oracle("oracle")])
        report = tmp_path / "oracle.csv"
        assert run(["eval", "--data", str(data), "--split", str(split),
                    "--checkpoint", "unused.flw", "--out", str(report)]) == 0
        frame = pd.read_csv(report)
        np.testing.assert_allclose(frame["r2"], 1.0)
        np.testing.assert_allclose(frame["rmse"], 0.0, atol=1e-15)

    def test_eval_trim_split_with_lower_corner(self, tmp_path, caplog):
        """Test that a test sample nearest neighbour cannot place is reported as undefined."""
        data = tmp_path / "data"
        # all 2^7 corners, so the all-lower vertex (zero after normalisation) is in the test set
        assert run(["generate", "--count", "20", "--seed", "4", "--corners", "128",
                    "--points-per-ring", "2", "--out", str(data)]) == 0
        split = tmp_path / "trim.json"
        assert run(["split", "--data", str(data), "--kind", "trim", "--seed", "4", "--out", str(split)]) == 0
        code, checkpoint = train(tmp_path, data, split, "flare")
        assert code == 0

        report = tmp_path / "metrics.csv"
        with caplog.at_level(logging.WARNING):
            assert run(["eval", "--data", str(data), "--split", str(split),
                        "--checkpoint", str(checkpoint), "--out", str(report)]) == 0
        frame = pd.read_csv(report)
        assert list(frame["method"]) == ["flare"] * 3 + ["nearest"] * 3
        assert set(frame["split"]) == {"trim"}
        assert "nearest: no prediction for c" in caplog.text


class TestThreads:
    """Test thread-count resolution."""

    def test_default_from_settings(self, workspace, mocker):
        """Test that FLARE_THREADS is used when --threads is absent."""
        tmp_path, data, split = workspace
        mocker.patch.object(settings, "THREADS", 3)
        trainer = mocker.patch("src.main_workflow.train_flare", side_effect=NonFiniteLoss("stop"))
        run(["train", "--data", str(data), "--split", str(split), "--out", str(tmp_path / "m.flw"), *TINY])
        assert trainer.call_args.args[1].threads == 3

    def test_invalid_thread_count(self, workspace):
        """Test that zero threads is a usage error."""
        tmp_path, data, _ = workspace
        assert run(["--threads", "0", "split", "--data", str(data), "--kind", "random",
                    "--out", str(tmp_path / "s.json")]) == 2


class TestExitCodes:
    """Test error handling and exit codes."""

    def test_unknown_command(self):
        """Test that argparse errors become exit code 2."""
        assert run(["deploy"]) == 2

    def test_wrong_parameter_count(self, tmp_path):
        """Test that --params needs seven values."""
        assert run(["infer", "--checkpoint", "x.flw", "--params", "1,2,3", "--out", str(tmp_path / "f.csv")]) == 2

    def test_lamp_with_lambda(self, workspace):
        """Test that LAMP with a regulariser is a configuration error."""
        tmp_path, data, split = workspace
        code, _ = train(tmp_path, data, split, "lamp", "--lambda", "0.3")
        assert code == 2

    def test_invalid_config_value(self, workspace):
        """Test that a negative octave count is rejected by the config model."""
        tmp_path, data, split = workspace
        code, _ = train(tmp_path, data, split, "flare", "--octaves", "-1")
        assert code == 2

    def test_missing_dataset(self, tmp_path, capsys):
        """Test that a missing dataset is a data error with a one-line diagnostic."""
        code = run(["split", "--data", str(tmp_path / "nothing"), "--kind", "random",
                    "--out", str(tmp_path / "s.json")])
        assert code == 1
        assert "FormatError" in capsys.readouterr().err

    def test_non_finite_loss(self, workspace, mocker):
        """Test that a diverging training run exits with code 1."""
        tmp_path, data, split = workspace
        mocker.patch("src.main_workflow.train_flare", side_effect=NonFiniteLoss("loss became nan"))
        code, checkpoint = train(tmp_path, data, split, "flare")
        assert code == 1
        assert not checkpoint.exists()

    @pytest.mark.parametrize(
        "content",
        ["x_u,y_u\n0.1,0.2\n", "x_u,y_u,z_u\n0.1,0.2,abc\n", "", 'x_u,y_u,z_u\n"0.1,0.2\n'],
        ids=["missing-column", "non-numeric", "empty", "unterminated-quote"],
    )
    def test_malformed_coordinate_file(self, workspace, capsys, content):
        """Test that an unreadable --coords CSV is a data error, not a traceback."""
        tmp_path, data, split = workspace
        _, checkpoint = train(tmp_path, data, split, "lamp")
        coords = tmp_path / "coords.csv"
        coords.write_text(content)
        code = run(["infer", "--checkpoint", str(checkpoint), "--params", QUERY,
                    "--coords", str(coords), "--out", str(tmp_path / "f.csv")])
        assert code == 1
        assert "coords.csv" in capsys.readouterr().err
        assert not (tmp_path / "f.csv").exists()


class TestSweep:
    """Test the train-size sweep."""

    def test_default_sizes_scale_with_pool(self):
        """Test the default grid scaled to the training pool."""
        assert sweep_sizes(None, 16) == [2, 4, 8, 12, 16]
        assert sweep_sizes(None, 80) == [10, 20, 40, 60, 80]

    def test_requested_sizes_clipped(self):
        """Test that sizes are clipped to [2, pool] and deduplicated."""
        assert sweep_sizes([1, 2, 50, 60], 10) == [2, 10]

    def test_sweep_reports_nearest(self, workspace):
        """Test that a nearest-only sweep trains the LAMP donor behind the scenes."""
        tmp_path, data, _ = workspace
        out = tmp_path / "sweep.csv"
        assert run(["--threads", "1", "sweep", "--data", str(data), "--sizes", "3,6",
                    "--methods", "nearest", "--out", str(out), *TINY]) == 0
        frame = pd.read_csv(out)
        assert list(frame["size"].unique()) == [3, 6]
        assert set(frame["method"]) == {"nearest"}
        assert "wrmse_std" in frame.columns

    def test_sweep_keeps_going_without_prediction(self, workspace, mocker, caplog):
        """Test that a method that cannot predict a test sample leaves undefined metrics."""
        tmp_path, data, _ = workspace
        mocker.patch("src.training.surrogates.nn_predict", side_effect=DegenerateQuery("zero norm"))
        out = tmp_path / "sweep.csv"
        with caplog.at_level(logging.WARNING):
            assert run(["--threads", "1", "sweep", "--data", str(data), "--sizes", "4",
                        "--methods", "lamp,nearest", "--out", str(out), *TINY]) == 0
        frame = pd.read_csv(out, keep_default_na=False)
        nearest = frame[frame["method"] == "nearest"]
        assert set(nearest["r2"]) == {"undefined"}
        assert set(nearest["rmse_std"]) == {"undefined"}
        assert "undefined" not in set(frame[frame["method"] == "lamp"]["rmse"])
        assert "nearest: no prediction for s" in caplog.text


@pytest.mark.slow
def test_feasibility_command(tmp_path):
    """Test the feasibility report and saved model, then scoring an inference query."""
    data = tmp_path / "data"
    assert run(["generate", "--count", "40", "--seed", "3", "--points-per-ring", "3", "--out", str(data)]) == 0
    report = tmp_path / "feas.csv"
    model = tmp_path / "feas.flw"
    assert run(["feasibility", "--data", str(data), "--degree", "1",
                "--model", str(model), "--out", str(report)]) == 0
    row = pd.read_csv(report).iloc[0]
    assert row["n_test"] == 8
    assert 0.0 <= row["auc"] <= 1.0
    assert model.exists()
