"""CSV tables, the run manifest and images."""

import hashlib
import json
import logging
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import matplotlib
import numpy as np
import pandas as pd
import scipy
from PIL import Image

from rdfront import __version__
from rdfront.core.errors import DivergenceError, StorageError
from rdfront.core.settings import Settings
from rdfront.models.grid import Field

matplotlib.use("Agg")  # Use non-interactive backend
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_csv(
    path: PathLike, rows: Union[pd.DataFrame, Sequence[Mapping]], columns=None
) -> Path:
    """Comma separated, 17 significant digits."""
    path = Path(path)
    if isinstance(rows, pd.DataFrame):
        frame = rows
    else:
        frame = pd.DataFrame(list(rows), columns=columns)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=f"%.{Settings.CSV_PRECISION}g")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise StorageError(f"cannot write {path}") from e
    return path


def write_text(path: PathLike, lines: Iterable[str]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise StorageError(f"cannot write {path}") from e
    return path


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    directory: PathLike,
    config: Dict[str, Any],
    timings: Dict[str, float],
    assertions: Optional[Dict[str, bool]] = None,
    faults: Optional[List[Dict[str, str]]] = None,
    status: int = 0,
) -> Path:
    """manifest.json: config and settings echo, versions, timings, checksums."""
    directory = Path(directory)
    outputs = []
    for path in sorted(p for p in directory.rglob("*") if p.is_file()):
        relative = path.relative_to(directory)
        if path.name == "manifest.json" or relative.parts[0] == "logs":
            continue
        outputs.append(
            {
                "path": relative.as_posix(),
                "sha256": sha256_file(path),
                "bytes": path.stat().st_size,
            }
        )
    manifest = {
        "rdfront": __version__,
        "status": status,
        "config": config,
        "settings": Settings.to_dict(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "timings": timings,
        "assertions": assertions or {},
        "faults": faults or [],
        "outputs": outputs,
    }
    path = directory / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=2, default=str))
    except OSError as e:
        raise StorageError(f"cannot write manifest in {directory}") from e
    return path


def _gray(snapshot: Field) -> np.ndarray:
    values = np.asarray(snapshot.values, dtype=float)
    if not np.all(np.isfinite(values)) or values.min() < -0.1 or values.max() > 1.1:
        raise DivergenceError(
            f"snapshot at t={snapshot.time:.4g} outside [-0.1, 1.1]: "
            f"range [{np.nanmin(values):.4g}, {np.nanmax(values):.4g}]"
        )
    if values.ndim == 1:
        values = values[None, :]
    elif values.ndim > 2:
        raise StorageError("heatmaps need a 1-D or 2-D snapshot")
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def emit_heatmap(snapshot: Field, path: PathLike) -> Path:
    """Binary PPM; 0 maps to black, 1 to white, image rows follow grid rows."""
    path = Path(path)
    gray = _gray(snapshot)
    image = Image.fromarray(np.stack([gray] * 3, axis=-1))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        image.save(path, format="PPM")
    except OSError as e:
        logger.error(f"Failed to write heatmap {path}: {e}")
        raise StorageError(f"cannot write heatmap {path}") from e
    return path


def emit_figure(
    snapshot: Field,
    path: PathLike,
    interfaces: Optional[Sequence[np.ndarray]] = None,
    title: str = "",
) -> Path:
    """PNG of a 2-D snapshot with optional u = 1/2 polylines on top."""
    grid = snapshot.grid
    if grid.dim != 2:
        raise StorageError("figures need a 2-D snapshot")
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 5))
    extent = (grid.lower[0], grid.upper[0], grid.lower[1], grid.upper[1])
    image = ax.imshow(
        snapshot.values.T,
        origin="lower",
        extent=extent,
        cmap="gray",
        vmin=0.0,
        vmax=1.0,
        aspect="auto",
    )
    for line in interfaces or []:
        ax.plot(line[:, 0], line[:, 1], color="tab:red", linewidth=1.0)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title or f"t = {snapshot.time:.3f}")
    fig.colorbar(image, ax=ax)
    plt.tight_layout()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        plt.savefig(path, dpi=150, bbox_inches="tight")
    finally:
        plt.close(fig)
    return path
