# src/data/dataset.py
"""
Dataset model: one FieldSample per simulation, grouped in a Dataset that also
carries the parameter bounds used for normalisation.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.errors import InsufficientData, ShapeMismatch
from src.tools.geometry import unit_band_mask
from src.tools.neural_field import FieldBatch

PARAMETER_NAMES = ("r_out", "t_out", "r_in", "t_in", "h", "power", "velocity")

# Ranges used for dataset generation (lo, hi) per parameter
PARAMETER_RANGES = np.array(
    [
        [35.0, 40.0],  # outer ring centre radius
        [5.0, 10.0],  # outer ring thickness
        [20.0, 25.0],  # inner ring centre radius
        [5.0, 10.0],  # inner ring thickness
        [0.2, 1.0],  # height
        [5.0, 10.0],  # laser power
        [5.0, 10.0],  # deposition velocity
    ]
)

ORIGIN_LHS = "lhs"
ORIGIN_CORNER = "corner"


@dataclass(frozen=True)
class FieldSample:
    """
    One simulation: raw parameters, unit-space coordinates and the
    displacement targets at those coordinates.
    """

    id: str
    params: np.ndarray
    coords: np.ndarray
    targets: np.ndarray
    feasible: Optional[bool] = None
    origin: str = ORIGIN_LHS

    def __post_init__(self):
        params = np.asarray(self.params, dtype=np.float64).reshape(-1)
        coords = np.asarray(self.coords, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if params.shape != (len(PARAMETER_NAMES),):
            raise ShapeMismatch(f"sample {self.id}: expected 7 parameters, got {params.shape}")
        if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] < 1:
            raise ShapeMismatch(f"sample {self.id}: coords must have shape (n>=1, 3)")
        if targets.shape != coords.shape:
            raise ShapeMismatch(
                f"sample {self.id}: targets {targets.shape} do not match coords {coords.shape}"
            )
        if not np.all(unit_band_mask(coords)):
            raise ShapeMismatch(f"sample {self.id}: coordinates outside the unit bands")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "targets", targets)

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    def batch(self) -> FieldBatch:
        return FieldBatch(self.coords, self.targets)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[FieldSample, ...]
    bounds: np.ndarray = field(default_factory=lambda: PARAMETER_RANGES.copy())
    family: str = "affine_exact"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=np.float64))
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ShapeMismatch("sample ids must be unique")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def subset(self, ids) -> list[FieldSample]:
        lookup = {s.id: s for s in self.samples}
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise InsufficientData(f"sample ids not in dataset: {missing[:5]}")
        return [lookup[i] for i in ids]

    def of_origin(self, origin: str) -> list[FieldSample]:
        return [s for s in self.samples if s.origin == origin]

    def normalized_params(self, samples=None) -> np.ndarray:
        """Rows of min-max normalised parameters (n x 7)."""
        samples = self.samples if samples is None else samples
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return (np.array([s.params for s in samples]) - lo) / (hi - lo)
