# tests/test_trainer.py
"""
Unit tests for two-phase FLARE/LAMP training, inference by weight mixing and
ensemble checkpoints.
"""
import numpy as np
import pytest

from src.config import derive_seed
from src.data.dataset import FieldSample
from src.errors import ConfigError, FormatError, UnitRadiusOutOfBand
from src.tools.neural_field import forward, init_weights
from src.training.flare import (
    architecture_for,
    coefficient_matrix,
    fit_network,
    load_ensemble,
    predict_field,
    regularization,
    save_ensemble,
    select_base_index,
    train_base,
    train_flare,
    train_joint,
)
from tests.conftest import finite_difference, relative_error


@pytest.fixture
def base(small_dataset, tiny_config):
    weights, _ = train_base(small_dataset.samples[0], tiny_config)
    return weights


class TestRegularization:
    """Test the weight-space consistency penalty."""

    def test_gradient_matches_finite_differences(self, rng):
        """Test the analytic gradient with cross terms at D = 50, N = 4."""
        stack = rng.normal(size=(4, 50))
        C = rng.uniform(size=(4, 4))
        np.fill_diagonal(C, 0.0)
        C /= C.sum(axis=1, keepdims=True)

        _, analytic = regularization(stack, C, 0.3)
        numeric = finite_difference(
            lambda v: regularization(v.reshape(4, 50), C, 0.3)[0], stack.reshape(-1)
        )
        assert relative_error(analytic.reshape(-1), numeric) < 1e-6

    def test_value_is_sum_of_mixing_residuals(self, rng):
        """Test the value against sum_i ||W a_i - w_i||^2."""
        stack = rng.normal(size=(3, 7))
        C = np.array([[0.0, 0.4, 0.6], [1.0, 0.0, 0.0], [0.5, 0.5, 0.0]])
        value, _ = regularization(stack, C, 2.0)
        expected = sum(np.sum((C[i] @ stack - stack[i]) ** 2) for i in range(3))
        assert value == pytest.approx(2.0 * expected)

    def test_zero_weight_contributes_nothing(self, rng):
        """Test that lambda = 0 gives an exactly zero value and gradient."""
        value, grad = regularization(rng.normal(size=(3, 5)), np.eye(3), 0.0)
        assert value == 0.0
        assert not grad.any()

    def test_no_coefficients_gives_identity(self):
        """Test that a single-sample ensemble uses C = I."""
        np.testing.assert_array_equal(coefficient_matrix((), 1), np.eye(1))


class TestTrainJoint:
    """Test phase 2 joint training."""

    def test_zero_epochs_copies_base(self, small_dataset, tiny_config, base):
        """Test that every column starts as the phase 1 weights."""
        cfg = tiny_config.model_copy(update={"phase2_epochs": 0})
        ens = train_joint(small_dataset.samples[:4], base, cfg)
        for j in range(ens.n):
            np.testing.assert_array_equal(ens.network(j).flat, base.flat)

    def test_lamp_matches_independent_fits(self, small_dataset, tiny_config, base):
        """Test that LAMP columns equal independent per-sample fits while the rate only warms up."""
        cfg = tiny_config.model_copy(update={"mode": "lamp", "reg_weight": 0.0, "phase2_epochs": 4})
        samples = small_dataset.samples[:3]
        ens = train_joint(samples, base, cfg)
        for j, sample in enumerate(samples):
            alone, _ = fit_network(sample, cfg, base, 4, f"alone:{sample.id}")
            np.testing.assert_allclose(ens.network(j).flat, alone.flat, rtol=1e-12, atol=1e-14)

    def test_identical_samples_stay_identical(self, small_dataset, tiny_config, base):
        """Test that columns trained on identical samples never diverge."""
        source = small_dataset.samples[1]
        clones = [
            FieldSample(f"clone{i}", source.params, source.coords, source.targets) for i in range(3)
        ]
        ens = train_joint(clones, base, tiny_config)
        for j in (1, 2):
            np.testing.assert_array_equal(ens.network(j).flat, ens.network(0).flat)

    def test_thread_count_does_not_change_result(self, small_dataset, tiny_config, base):
        """Test that the parallel reconstruction is deterministic."""
        samples = small_dataset.samples[:4]
        one = train_joint(samples, base, tiny_config)
        four = train_joint(samples, base, tiny_config.model_copy(update={"threads": 4}))
        np.testing.assert_array_equal(one.weights.values, four.weights.values)

    def test_coefficients_exclude_self(self, small_dataset, tiny_config, base):
        """Test one simplex coefficient vector per sample with a zero self-weight."""
        ens = train_joint(small_dataset.samples[:5], base, tiny_config)
        assert len(ens.coefficients) == 5
        for i, coeffs in enumerate(ens.coefficients):
            assert coeffs.alpha[i] == 0.0
            assert coeffs.alpha.sum() == pytest.approx(1.0)

    def test_single_sample_has_no_coefficients(self, small_dataset, tiny_config, base):
        """Test that N = 1 trains without a regulariser."""
        ens = train_joint(small_dataset.samples[:1], base, tiny_config)
        assert ens.n == 1
        assert ens.coefficients == ()

    def test_lamp_with_regulariser_rejected(self, small_dataset, tiny_config, base):
        """Test that mode 'lamp' with a non-zero lambda is a configuration error."""
        cfg = tiny_config.model_copy(update={"mode": "lamp", "reg_weight": 0.3})
        with pytest.raises(ConfigError):
            train_joint(small_dataset.samples[:3], base, cfg)

    def test_training_reduces_loss(self, small_dataset, tiny_config, base):
        """Test that the joint objective decreases."""
        ens = train_joint(small_dataset.samples[:4], base, tiny_config)
        trace = ens.traces[0]
        assert trace.final_loss < trace.losses[0]

    def test_large_weight_ties_collinear_middle_column(self, small_dataset, tiny_config, base):
        """Test that lambda = 1e6 stays finite and pulls a collinear middle column onto its neighbours' mix."""
        lo, hi = small_dataset.bounds[:, 0], small_dataset.bounds[:, 1]
        samples = [
            FieldSample(f"line{i}", lo + t * (hi - lo), s.coords, s.targets)
            for i, (t, s) in enumerate(zip((0.2, 0.5, 0.8), small_dataset.samples[:3]))
        ]

        def middle_gap(ens):
            mix = 0.5 * (ens.network(0).flat + ens.network(2).flat)
            return float(np.linalg.norm(ens.network(1).flat - mix))

        stiff = train_joint(samples, base, tiny_config.model_copy(update={"reg_weight": 1e6}))
        lamp = train_joint(
            samples, base, tiny_config.model_copy(update={"mode": "lamp", "reg_weight": 0.0})
        )
        np.testing.assert_allclose(stiff.coefficients[1].alpha, [0.5, 0.0, 0.5], atol=1e-6)
        assert np.all(np.isfinite(stiff.weights.values))
        assert np.isfinite(stiff.traces[-1].final_loss)
        assert middle_gap(stiff) < 0.2 * middle_gap(lamp)


class TestTrainFlare:
    """Test the full two-phase pipeline."""

    def test_reproducible(self, small_dataset, tiny_config):
        """Test that the same seed gives bit-identical weights."""
        a = train_flare(small_dataset.samples[:4], tiny_config)
        b = train_flare(small_dataset.samples[:4], tiny_config)
        np.testing.assert_array_equal(a.weights.values, b.weights.values)
        assert a.base_index == b.base_index

    def test_base_index_from_seed(self, small_dataset, tiny_config):
        """Test that the phase 1 sample comes from the seeded selection."""
        ens = train_flare(small_dataset.samples[:4], tiny_config)
        assert ens.base_index == select_base_index(4, tiny_config.seed)
        assert ens.traces[0].label == f"base:{small_dataset.samples[ens.base_index].id}"

    def test_base_matches_train_base(self, small_dataset, tiny_config):
        """Test that phase 1 is a seeded fit from the base-init stage."""
        sample = small_dataset.samples[2]
        init = init_weights(architecture_for(tiny_config), derive_seed(tiny_config.seed, "base-init"))
        expected, expected_trace = fit_network(sample, tiny_config, init, tiny_config.phase1_epochs, "base")
        weights, trace = train_base(sample, tiny_config)
        np.testing.assert_array_equal(weights.flat, expected.flat)
        assert trace.label == f"base:{sample.id}"
        assert trace.final_loss == expected_trace.final_loss


class TestPredictField:
    """Test inference by weight mixing."""

    def test_training_point_reproduces_its_network(self, small_dataset, tiny_config):
        """Test that a training parameter vector recovers that column when N - 1 <= k."""
        samples = small_dataset.samples[:4]
        ens = train_flare(samples, tiny_config)
        coords = samples[2].coords
        np.testing.assert_allclose(
            predict_field(ens, samples[2].params, coords),
            forward(ens.network(2), coords),
            atol=1e-8,
        )

    def test_out_of_band_coordinates_rejected(self, small_dataset, tiny_config):
        """Test that coordinates in the spoke gap are refused."""
        ens = train_flare(small_dataset.samples[:3], tiny_config)
        with pytest.raises(UnitRadiusOutOfBand):
            predict_field(ens, small_dataset.samples[0].params, [[0.6, 0.0, 0.5]])


class TestEnsembleCheckpoint:
    """Test saving and loading trained ensembles."""

    def test_round_trip(self, small_dataset, tiny_config, tmp_path):
        """Test that weights, parameters, coefficients and config survive a save/load."""
        ens = train_flare(small_dataset.samples[:4], tiny_config)
        path = save_ensemble(ens, tmp_path / "flare.flw")
        loaded = load_ensemble(path)
        np.testing.assert_array_equal(loaded.weights.values, ens.weights.values)
        np.testing.assert_array_equal(loaded.params.values, ens.params.values)
        assert loaded.sample_ids == ens.sample_ids
        assert loaded.base_index == ens.base_index
        assert loaded.config == ens.config
        for a, b in zip(loaded.coefficients, ens.coefficients):
            np.testing.assert_array_equal(a.alpha, b.alpha)

    def test_checkpoint_bytes_are_reproducible(self, small_dataset, tiny_config, tmp_path):
        """Test that two identical runs write identical files."""
        first = save_ensemble(train_flare(small_dataset.samples[:3], tiny_config), tmp_path / "a.flw")
        second = save_ensemble(train_flare(small_dataset.samples[:3], tiny_config), tmp_path / "b.flw")
        assert first.read_bytes() == second.read_bytes()
        assert (tmp_path / "a.flw.json").read_text() == (tmp_path / "b.flw.json").read_text()

    def test_truncated_checkpoint_rejected(self, small_dataset, tiny_config, tmp_path):
        """Test that a truncated payload is a format error."""
        path = save_ensemble(train_flare(small_dataset.samples[:3], tiny_config), tmp_path / "c.flw")
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_ensemble(path)
