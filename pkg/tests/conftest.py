# tests/conftest.py
"""
Shared fixtures: a small synthetic dataset and a tiny training configuration
that keeps every training test to a fraction of a second.
"""
import numpy as np
import pytest

from src.config import TrainConfig
from src.data.sampling import generate_dataset


@pytest.fixture(scope="session")
def small_dataset():
    """Eight affine-exact samples with 15 points per ring."""
    return generate_dataset(8, seed=3, n_per_ring=15)


@pytest.fixture
def tiny_config():
    return TrainConfig(
        hidden_widths=(8,),
        octaves=1,
        phase1_epochs=40,
        phase2_epochs=40,
        baseline_epochs=40,
        warmup_epochs=5,
        lr_patience=10,
        early_stop_patience=100,
        base_lr=5e-3,
        log_every=1000,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference(f, x, eps=1e-6):
    """Central differences of a scalar function of a flat vector."""
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = eps
        grad[i] = (f(x + step) - f(x - step)) / (2 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    scale = max(float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)
