# src/data/splits.py
"""
Train/test split construction: random 80/20, greedy max-min train subsets
with a fixed test set, and the trimmed-box + corners extrapolation split.
All distances are Euclidean in the normalised [0, 1]^7 parameter cube.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from src.config import derive_seed
from src.data.dataset import ORIGIN_CORNER, ORIGIN_LHS, Dataset
from src.errors import InsufficientData, InvalidSplit

logger = logging.getLogger("FLARE Splits")

TRAIN_FRACTION = 0.8


class SplitKind(str, Enum):
    RANDOM_80_20 = "random"
    GREEDY_MAX_MIN = "greedy"
    TRIM_CORNERS = "trim"


@dataclass(frozen=True)
class Split:
    kind: SplitKind
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    size: Optional[int] = None
    trim_fraction: Optional[float] = None

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise InvalidSplit(f"train and test ids overlap: {sorted(overlap)[:5]}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "seed": self.seed,
            "size": self.size,
            "trim_fraction": self.trim_fraction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Split":
        return cls(
            kind=SplitKind(data["kind"]),
            train_ids=tuple(data["train_ids"]),
            test_ids=tuple(data["test_ids"]),
            seed=int(data["seed"]),
            size=data.get("size"),
            trim_fraction=data.get("trim_fraction"),
        )


def greedy_max_min(points: np.ndarray, ids: list[str], m: int) -> list[str]:
    """
    Greedy max-min selection of m ids.

    Starts from the point nearest the cube centroid (0.5, ..., 0.5), then keeps
    adding the candidate whose minimum distance to the selected set is largest.
    Ties go to the lowest id, which makes the result independent of input order.
    """
    if m > len(ids):
        raise InsufficientData(f"cannot select {m} points from a pool of {len(ids)}")
    if m <= 0:
        return []
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    pts = np.asarray(points, dtype=np.float64)[order]
    ordered_ids = [ids[i] for i in order]

    centroid = np.full(pts.shape[1], 0.5)
    first = int(np.argmin(np.linalg.norm(pts - centroid, axis=1)))
    selected = [first]
    min_dist = np.linalg.norm(pts - pts[first], axis=1)
    min_dist[first] = -np.inf
    while len(selected) < m:
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(pts - pts[nxt], axis=1))
        min_dist[selected] = -np.inf
    return [ordered_ids[i] for i in selected]


def trim_fraction_for(n: int, dims: int) -> float:
    """Per-dimension symmetric trim so a uniform cloud of n keeps ceil(n/2) in expectation."""
    keep = math.ceil(n / 2) / n
    return 0.5 * (1.0 - keep ** (1.0 / dims))


def build_split(dataset: Dataset, kind, seed: int, size: Optional[int] = None) -> Split:
    """
    Raises:
        InsufficientData: if the dataset cannot support the requested split
    """
    kind = SplitKind(kind)
    lhs = dataset.of_origin(ORIGIN_LHS)
    lhs_ids = [s.id for s in lhs]
    if len(lhs) < 2:
        raise InsufficientData(f"a split needs at least 2 LHS samples, got {len(lhs)}")

    if kind in (SplitKind.RANDOM_80_20, SplitKind.GREEDY_MAX_MIN):
        rng = np.random.default_rng(derive_seed(seed, "split:random"))
        shuffled = [lhs_ids[i] for i in rng.permutation(len(lhs_ids))]
        n_train = int(round(TRAIN_FRACTION * len(shuffled)))
        n_train = min(max(n_train, 1), len(shuffled) - 1)
        train_pool, test_ids = shuffled[:n_train], shuffled[n_train:]

        if kind is SplitKind.RANDOM_80_20:
            return Split(kind, tuple(train_pool), tuple(test_ids), seed)

        m = len(train_pool) if size is None else size
        pool = dataset.subset(train_pool)
        train_ids = greedy_max_min(dataset.normalized_params(pool), train_pool, m)
        logger.info(f"Greedy max-min split: {len(train_ids)} train, {len(test_ids)} test")
        return Split(kind, tuple(train_ids), tuple(test_ids), seed, size=m)

    fraction = trim_fraction_for(len(lhs), dataset.bounds.shape[0])
    q = dataset.normalized_params(lhs)
    inside = np.all((q >= fraction) & (q <= 1.0 - fraction), axis=1)
    train_ids = [sid for sid, keep in zip(lhs_ids, inside) if keep]
    if not train_ids:
        raise InsufficientData("trimmed box retains no training samples")
    test_ids = [sid for sid, keep in zip(lhs_ids, inside) if not keep]
    test_ids += [s.id for s in dataset.of_origin(ORIGIN_CORNER)]
    logger.info(
        f"Trim+corners split: trim {fraction:.4f} per side, "
        f"{len(train_ids)} train, {len(test_ids)} test"
    )
    return Split(kind, tuple(train_ids), tuple(test_ids), seed, trim_fraction=fraction)
