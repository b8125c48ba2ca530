"""Binary snapshot files and trajectory directories."""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from rdfront.core.errors import StorageError
from rdfront.core.settings import Settings
from rdfront.models.grid import AxisBoundary, Field, Grid, Trajectory

logger = logging.getLogger(__name__)

INDEX_FILE = "index.csv"


def _magic(value: str) -> bytes:
    raw = value.encode("ascii")
    if len(raw) != 8:
        raise StorageError(f"magic must be 8 bytes, got {value!r}")
    return raw


def encode_snapshot(snapshot: Field) -> bytes:
    grid = snapshot.grid
    parts = [
        _magic(Settings.SNAPSHOT_MAGIC),
        np.array([grid.dim], dtype="<i4").tobytes(),
        np.asarray(grid.lower, dtype="<f8").tobytes(),
        np.asarray(grid.upper, dtype="<f8").tobytes(),
        np.asarray(grid.spacing, dtype="<f8").tobytes(),
        np.asarray(grid.shape, dtype="<i4").tobytes(),
        np.array([snapshot.time], dtype="<f8").tobytes(),
        np.ascontiguousarray(snapshot.values, dtype="<f8").tobytes(order="C"),
    ]
    return b"".join(parts)


def decode_snapshot(
    raw: bytes, boundaries: Optional[Tuple[AxisBoundary, ...]] = None
) -> Field:
    magic = _magic(Settings.SNAPSHOT_MAGIC)
    if raw[:8] != magic:
        raise StorageError(f"not a snapshot file (magic {raw[:8]!r})")
    offset = 8
    dim = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
    offset += 4
    lower = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset)
    offset += 8 * dim
    offset += 8 * dim  # upper extents are implied by lower, spacing and shape
    spacing = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset)
    offset += 8 * dim
    shape = np.frombuffer(raw, dtype="<i4", count=dim, offset=offset)
    offset += 4 * dim
    time = float(np.frombuffer(raw, dtype="<f8", count=1, offset=offset)[0])
    offset += 8
    count = int(np.prod(shape))
    if len(raw) - offset != 8 * count:
        raise StorageError(
            f"snapshot payload holds {len(raw) - offset} bytes, expected {8 * count}"
        )
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    if boundaries is None:
        boundaries = tuple(AxisBoundary.clamped() for _ in range(dim))
    grid = Grid(
        tuple(float(v) for v in lower),
        tuple(float(v) for v in spacing),
        tuple(int(n) for n in shape),
        tuple(boundaries),
    )
    return Field(grid, values.copy(), time)


def write_snapshot(path: Union[str, Path], snapshot: Field) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_snapshot(snapshot))
    except OSError as e:
        logger.error(f"Failed to write snapshot {path}: {e}")
        raise StorageError(f"cannot write snapshot {path}") from e
    return path


def read_snapshot(
    path: Union[str, Path], boundaries: Optional[Tuple[AxisBoundary, ...]] = None
) -> Field:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read snapshot {path}") from e
    return decode_snapshot(raw, boundaries)


def write_trajectory(directory: Union[str, Path], trajectory: Trajectory) -> Path:
    """Snapshots as ``snapshot_00000.bin`` ... plus ``index.csv``."""
    directory = Path(directory)
    rows = []
    for k, snapshot in enumerate(trajectory):
        name = f"snapshot_{k:05d}.bin"
        write_snapshot(directory / name, snapshot)
        rows.append({"index": k, "time": snapshot.time, "filename": name})
    try:
        pd.DataFrame(rows, columns=["index", "time", "filename"]).to_csv(
            directory / INDEX_FILE,
            index=False,
            float_format=f"%.{Settings.CSV_PRECISION}g",
        )
    except OSError as e:
        logger.error(f"Failed to write trajectory index in {directory}: {e}")
        raise StorageError(f"cannot write trajectory index in {directory}") from e
    logger.info(f"Stored {len(rows)} snapshots in {directory}")
    return directory


def read_trajectory(
    directory: Union[str, Path], boundaries: Optional[Tuple[AxisBoundary, ...]] = None
) -> Trajectory:
    directory = Path(directory)
    try:
        index = pd.read_csv(directory / INDEX_FILE)
    except (OSError, pd.errors.ParserError) as e:
        raise StorageError(f"cannot read trajectory index in {directory}") from e
    trajectory = Trajectory(directory=directory)
    for name in index.sort_values("index")["filename"]:
        trajectory.append(read_snapshot(directory / name, boundaries))
    return trajectory
