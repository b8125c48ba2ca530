"""Pulsating-front profile files with a diagnostics CSV next to them."""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from rdfront.core.errors import StorageError
from rdfront.core.settings import Settings
from rdfront.models.front import FrontOutcome, ProfileTable, PulsatingFront

logger = logging.getLogger(__name__)


def write_profile(path: Union[str, Path], front: PulsatingFront) -> Path:
    """Header (direction, speed, shift, xi grid, cell lattice) then U values."""
    if front.table is None:
        raise StorageError("front carries no profile table")
    table = front.table
    xi = np.asarray(table.xi)
    steps = np.diff(xi)
    if xi.size < 2 or np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
        raise StorageError("profile xi grid must be uniform")
    dim = len(front.direction)
    parts = [
        Settings.PROFILE_MAGIC.encode("ascii"),
        np.array([dim], dtype="<i4").tobytes(),
        np.asarray(front.direction, dtype="<f8").tobytes(),
        np.array([front.speed, front.shift, xi[0], steps[0]], dtype="<f8").tobytes(),
        np.array([xi.size], dtype="<i4").tobytes(),
        np.asarray(table.cell_shape, dtype="<i4").tobytes(),
        np.asarray(table.cell_spacing, dtype="<f8").tobytes(),
        np.ascontiguousarray(table.values, dtype="<f8").tobytes(),
    ]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"".join(parts))
        write_front_diagnostics(path.with_name(path.stem + "_diagnostics.csv"), front)
    except OSError as e:
        logger.error(f"Failed to write profile {path}: {e}")
        raise StorageError(f"cannot write profile {path}") from e
    return path


def read_profile(path: Union[str, Path]) -> PulsatingFront:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read profile {path}") from e
    if raw[:8] != Settings.PROFILE_MAGIC.encode("ascii"):
        raise StorageError(f"not a profile file (magic {raw[:8]!r})")
    offset = 8
    dim = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
    offset += 4
    direction = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset).copy()
    offset += 8 * dim
    speed, shift, start, step = np.frombuffer(raw, dtype="<f8", count=4, offset=offset)
    offset += 32
    count = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
    offset += 4
    cell_shape = tuple(
        int(n) for n in np.frombuffer(raw, dtype="<i4", count=dim, offset=offset)
    )
    offset += 4 * dim
    cell_spacing = tuple(
        float(h) for h in np.frombuffer(raw, dtype="<f8", count=dim, offset=offset)
    )
    offset += 8 * dim
    columns = int(np.prod(cell_shape))
    values = np.frombuffer(raw, dtype="<f8", count=count * columns, offset=offset)
    table = ProfileTable(
        xi=start + step * np.arange(count),
        values=values.reshape(count, columns).copy(),
        cell_shape=cell_shape,
        cell_spacing=cell_spacing,
    )
    periods = tuple(n * h for n, h in zip(cell_shape, cell_spacing))
    return PulsatingFront(
        direction=direction,
        speed=float(speed),
        stderr=0.0,
        outcome=FrontOutcome.CONVERGED,
        periods=periods,
        table=table,
        shift=float(shift),
    )


def front_diagnostics(front: PulsatingFront) -> dict:
    row = {
        "direction": " ".join(f"{v:.17g}" for v in front.direction),
        "speed": front.speed,
        "stderr": front.stderr,
        "outcome": front.outcome.value,
        "shift": front.shift,
        "commensurate": front.commensurate,
        "direction_error": front.direction_error,
    }
    if front.decay is not None:
        row.update(
            mu=front.decay.mu,
            C=front.decay.C,
            decay_r2_left=front.decay.r2_left,
            decay_r2_right=front.decay.r2_right,
            decay_flagged=front.decay.flagged,
        )
    if front.bounds is not None:
        row.update(delta=front.bounds.delta, r=front.bounds.r, bounds_R=front.bounds.R)
    if front.table is not None:
        row.update(
            filled_bins=front.table.filled_bins,
            monotonized=front.table.monotonized,
            max_violation=front.table.max_violation,
        )
    row.update(front.diagnostics)
    return row


def write_front_diagnostics(path: Union[str, Path], front: PulsatingFront) -> Path:
    path = Path(path)
    pd.DataFrame([front_diagnostics(front)]).to_csv(
        path, index=False, float_format=f"%.{Settings.CSV_PRECISION}g"
    )
    return path
