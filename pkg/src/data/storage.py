# src/data/storage.py
"""
On-disk formats.

Dataset directory:
    manifest.json        format tag, version, family, bounds, one entry per sample
    points/<id>.fld      b"FLD1", u32 point count, then n x 6 f64 rows
                         (x, y, z, u_x, u_y, u_z)

Checkpoint:
    <name>.flw           b"FLW1", u32 version, u32 octaves, u32 layer-width count,
                         u32 widths..., u32 N, then N flat f64 columns
    <name>.flw.json      sidecar: kind tag plus everything needed to rebuild the model

All integers are little-endian u32, all reals little-endian IEEE-754 f64.
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.data.dataset import PARAMETER_NAMES, Dataset, FieldSample
from src.data.splits import Split
from src.errors import FormatError, VersionMismatch
from src.models import validate_sample_entry, validate_split_record

logger = logging.getLogger("FLARE Storage")

POINTS_MAGIC = b"FLD1"
CHECKPOINT_MAGIC = b"FLW1"
DATASET_FORMAT = "flare-dataset"
DATASET_VERSION = 1
CHECKPOINT_VERSION = 1

_U32 = struct.Struct("<I")
_F64 = np.dtype("<f8")


def dump_json(data, path: Path) -> None:
    """Byte-stable JSON: sorted keys, fixed indentation, trailing newline."""
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e


class _Reader:
    """Cursor over a bytes buffer that raises FormatError on truncation."""

    def __init__(self, data: bytes, source: Path):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"{self.source}: truncated file (needed {size} bytes at {self.offset})")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(count * _F64.itemsize), dtype=_F64).astype(np.float64)

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{self.source}: {len(self.data) - self.offset} trailing bytes")


# Point files

def write_points(path: Path, coords: np.ndarray, values: np.ndarray) -> None:
    rows = np.hstack([coords, values]).astype(_F64)
    Path(path).write_bytes(POINTS_MAGIC + _U32.pack(rows.shape[0]) + rows.tobytes())


def read_points(path: Path) -> tuple[np.ndarray, np.ndarray]:
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take(4) != POINTS_MAGIC:
        raise FormatError(f"{path}: not a point file (bad magic)")
    n = reader.u32()
    rows = reader.f64(n * 6).reshape(n, 6)
    reader.finish()
    return rows[:, :3].copy(), rows[:, 3:].copy()


# Datasets

def save_dataset(dataset: Dataset, directory) -> Path:
    directory = Path(directory)
    (directory / "points").mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in dataset.samples:
        relative = f"points/{sample.id}.fld"
        write_points(directory / relative, sample.coords, sample.targets)
        entries.append(
            {
                "id": sample.id,
                "params": dict(zip(PARAMETER_NAMES, sample.params.tolist())),
                "feasible": sample.feasible,
                "origin": sample.origin,
                "file": relative,
                "n_points": sample.n_points,
            }
        )
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "family": dataset.family,
        "parameter_names": list(PARAMETER_NAMES),
        "bounds": dataset.bounds.tolist(),
        "samples": entries,
    }
    dump_json(manifest, directory / "manifest.json")
    logger.info(f"Saved dataset of {len(dataset)} samples to {directory}")
    return directory


def load_dataset(directory) -> Dataset:
    """
    Raises:
        FormatError: on a missing/malformed manifest or point file
        VersionMismatch: on an unsupported manifest version
    """
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{directory}: no manifest.json")
    manifest = load_json(manifest_path)
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{manifest_path}: not a FLARE dataset manifest")
    if manifest.get("version") != DATASET_VERSION:
        raise VersionMismatch(
            f"{manifest_path}: dataset version {manifest.get('version')}, expected {DATASET_VERSION}"
        )
    try:
        samples = []
        for entry in manifest["samples"]:
            is_valid, errors = validate_sample_entry(entry)
            if not is_valid:
                raise FormatError(f"{manifest_path}: invalid sample entry: {'; '.join(errors)}")
            coords, targets = read_points(directory / entry["file"])
            if coords.shape[0] != entry["n_points"]:
                raise FormatError(f"{entry['file']}: point count disagrees with the manifest")
            samples.append(
                FieldSample(
                    id=entry["id"],
                    params=np.array([entry["params"][name] for name in PARAMETER_NAMES]),
                    coords=coords,
                    targets=targets,
                    feasible=entry.get("feasible"),
                    origin=entry.get("origin", "lhs"),
                )
            )
        return Dataset(
            samples=tuple(samples),
            bounds=np.asarray(manifest["bounds"], dtype=np.float64),
            family=manifest.get("family", "unknown"),
        )
    except (KeyError, TypeError) as e:
        raise FormatError(f"{manifest_path}: malformed manifest ({e})") from e
    except FileNotFoundError as e:
        raise FormatError(f"{directory}: missing point file ({e.filename})") from e


# Checkpoints

@dataclass(frozen=True)
class Checkpoint:
    kind: str
    octaves: int
    widths: tuple[int, ...]
    columns: np.ndarray  # D x N
    meta: dict


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(path, kind: str, octaves: int, widths, columns: np.ndarray, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim == 1:
        columns = columns[:, None]
    header = CHECKPOINT_MAGIC + _U32.pack(CHECKPOINT_VERSION) + _U32.pack(octaves)
    header += _U32.pack(len(widths)) + b"".join(_U32.pack(int(w)) for w in widths)
    header += _U32.pack(columns.shape[1])
    # columns are contiguous, one network after another
    path.write_bytes(header + np.asfortranarray(columns).astype(_F64).tobytes(order="F"))
    dump_json({**meta, "kind": kind}, sidecar_path(path))
    logger.info(f"Saved {kind} checkpoint with {columns.shape[1]} column(s) to {path}")
    return path


def load_checkpoint(path) -> Checkpoint:
    """
    Raises:
        FormatError: on bad magic, truncation or a missing sidecar
        VersionMismatch: on an unsupported checkpoint version
    """
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except FileNotFoundError as e:
        raise FormatError(f"{path}: checkpoint not found") from e
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    octaves = reader.u32()
    widths = tuple(reader.u32() for _ in range(reader.u32()))
    n = reader.u32()
    remaining = len(reader.data) - reader.offset
    if n == 0 or remaining % (n * _F64.itemsize):
        raise FormatError(f"{path}: payload of {remaining} bytes does not hold {n} columns")
    d = remaining // (n * _F64.itemsize)
    columns = reader.f64(d * n).reshape(d, n, order="F")
    reader.finish()

    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"{path}: missing sidecar {side.name}")
    meta = load_json(side)
    kind = meta.pop("kind", None)
    if kind is None:
        raise FormatError(f"{side}: sidecar has no kind tag")
    return Checkpoint(kind=kind, octaves=octaves, widths=widths, columns=columns, meta=meta)


# Splits

def save_split(split: Split, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_json(split.to_dict(), path)
    logger.info(f"Saved {split.kind.value} split ({len(split.train_ids)} train) to {path}")
    return path


def load_split(path) -> Split:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: split file not found")
    record = load_json(path)
    is_valid, errors = validate_split_record(record)
    if not is_valid:
        raise FormatError(f"{path}: invalid split: {'; '.join(errors)}")
    return Split.from_dict(record)
