# src/data/sampling.py
"""
Design-of-experiments sampling and the synthetic displacement oracle that
stands in for the finite element dataset.
"""
import itertools
import logging
from enum import Enum

import numpy as np
from scipy.stats import qmc

from src.config import derive_seed
from src.data.dataset import (
    ORIGIN_CORNER,
    ORIGIN_LHS,
    PARAMETER_RANGES,
    Dataset,
    FieldSample,
)
from src.errors import InsufficientData, ShapeMismatch
from src.tools.geometry import DomainSpec, sample_unit_points

logger = logging.getLogger("FLARE Sampling")

FIELD_SCALE = 0.02
NONLINEAR_SCALE = 0.1
# q6 / (q7 + 0.5) > 0.42 holds for 58% of uniformly drawn (q6, q7)
FEASIBILITY_THRESHOLD = 0.42


class FieldFamily(str, Enum):
    AFFINE_EXACT = "affine_exact"
    MILDLY_NONLINEAR = "mildly_nonlinear"


def _check_ranges(ranges) -> np.ndarray:
    ranges = np.asarray(ranges, dtype=np.float64)
    if ranges.ndim != 2 or ranges.shape[1] != 2:
        raise ShapeMismatch(f"ranges must have shape (k, 2), got {ranges.shape}")
    if np.any(ranges[:, 0] >= ranges[:, 1]):
        raise ShapeMismatch("every range must satisfy lo < hi")
    return ranges


def lhs_sample(ranges, n: int, seed: int) -> np.ndarray:
    """
    Latin hypercube design: in every dimension the n values fall one per
    equal-width stratum, uniform within it.

    Returns:
        Array of shape (n, k) in the units of `ranges`
    """
    ranges = _check_ranges(ranges)
    if n < 1:
        raise InsufficientData(f"LHS needs n >= 1, got {n}")
    sampler = qmc.LatinHypercube(d=ranges.shape[0], scramble=True, rng=np.random.default_rng(seed))
    return qmc.scale(sampler.random(n), ranges[:, 0], ranges[:, 1])


def corner_params(ranges, count: int, seed: int) -> np.ndarray:
    """Seeded draw without replacement from the 2^k vertices of the bounds box."""
    ranges = _check_ranges(ranges)
    vertices = np.array(list(itertools.product(*[(lo, hi) for lo, hi in ranges])))
    if not 0 <= count <= len(vertices):
        raise InsufficientData(f"requested {count} corners, the box has {len(vertices)}")
    rng = np.random.default_rng(seed)
    return vertices[rng.choice(len(vertices), size=count, replace=False)]


def synthetic_field(p, coords, family=FieldFamily.AFFINE_EXACT, ranges=PARAMETER_RANGES) -> np.ndarray:
    """
    Closed-form displacement oracle on unit coordinates.

    With q the normalised parameters and s = 0.02:
        u_x = s (q1 x + q6 sin(pi x))
        u_y = s (q2 y + q6 sin(pi y))
        u_z = s (q3 z + (q4 + q5)/2 sin(pi z))
    The mildly nonlinear family adds s * 0.1 * q6 q7 * (x y, y z, 1).
    """
    family = FieldFamily(family)
    ranges = _check_ranges(ranges)
    q = (np.asarray(p, dtype=np.float64) - ranges[:, 0]) / (ranges[:, 1] - ranges[:, 0])
    c = np.asarray(coords, dtype=np.float64)
    x, y, z = c[:, 0], c[:, 1], c[:, 2]

    u = np.column_stack(
        [
            q[0] * x + q[5] * np.sin(np.pi * x),
            q[1] * y + q[5] * np.sin(np.pi * y),
            q[2] * z + 0.5 * (q[3] + q[4]) * np.sin(np.pi * z),
        ]
    )
    if family is FieldFamily.MILDLY_NONLINEAR:
        coupling = q[5] * q[6]
        u = u + NONLINEAR_SCALE * coupling * np.column_stack([x * y, y * z, np.ones_like(z)])
    return FIELD_SCALE * u


def feasibility_label(p, ranges=PARAMETER_RANGES) -> bool:
    """Synthetic melt-feasibility rule on normalised power and velocity."""
    ranges = _check_ranges(ranges)
    q = (np.asarray(p, dtype=np.float64) - ranges[:, 0]) / (ranges[:, 1] - ranges[:, 0])
    return bool(q[5] / (q[6] + 0.5) > FEASIBILITY_THRESHOLD)


def generate_dataset(
    count: int,
    seed: int,
    family=FieldFamily.AFFINE_EXACT,
    n_per_ring: int = 100,
    corners: int = 0,
    ranges=PARAMETER_RANGES,
) -> Dataset:
    """
    LHS parameter vectors (plus optional corner vectors) with synthetic fields
    sampled on fresh unit-space points and feasibility labels.
    """
    family = FieldFamily(family)
    ranges = _check_ranges(ranges)
    logger.info(f"Generating {count} LHS + {corners} corner samples ({family.value}), seed {seed}")

    designs = [(ORIGIN_LHS, p) for p in lhs_sample(ranges, count, derive_seed(seed, "lhs"))]
    if corners:
        designs += [
            (ORIGIN_CORNER, p) for p in corner_params(ranges, corners, derive_seed(seed, "corners"))
        ]

    samples = []
    for index, (origin, params) in enumerate(designs):
        sample_id = f"{'s' if origin == ORIGIN_LHS else 'c'}{index:04d}"
        DomainSpec.from_params(params)  # rejects overlapping rings
        coords = sample_unit_points(n_per_ring, derive_seed(seed, f"points:{sample_id}"))
        samples.append(
            FieldSample(
                id=sample_id,
                params=params,
                coords=coords,
                targets=synthetic_field(params, coords, family, ranges),
                feasible=feasibility_label(params, ranges),
                origin=origin,
            )
        )
    return Dataset(samples=tuple(samples), bounds=ranges, family=family.value)
