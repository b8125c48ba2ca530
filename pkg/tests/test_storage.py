import json

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from rdfront.core.errors import DivergenceError, StorageError
from rdfront.models.grid import Field, Grid, Trajectory
from rdfront.services.pulsating_service import closed_form_front
from rdfront.storage import (
    decode_snapshot,
    emit_figure,
    emit_heatmap,
    encode_snapshot,
    read_profile,
    read_snapshot,
    read_trajectory,
    sha256_file,
    write_csv,
    write_manifest,
    write_profile,
    write_snapshot,
    write_trajectory,
)


@pytest.fixture
def snapshot():
    grid = Grid.box([-1.0, 0.5], [1.0, 2.0], (0.25, 0.5))
    values = np.linspace(0.0, 1.0, grid.size)
    return Field(grid, values, 1.0 / 3.0)


def test_snapshot_file_is_exact(snapshot, tmp_path):
    path = write_snapshot(tmp_path / "u.bin", snapshot)
    restored = read_snapshot(path)
    assert restored.grid.same_nodes(snapshot.grid)
    assert restored.time == snapshot.time
    assert np.array_equal(restored.values, snapshot.values)


def test_snapshot_header_checks(snapshot):
    raw = encode_snapshot(snapshot)
    assert raw[:8] == b"RDFRONT1"
    with pytest.raises(StorageError, match="not a snapshot"):
        decode_snapshot(b"XXXXXXXX" + raw[8:])
    with pytest.raises(StorageError, match="payload"):
        decode_snapshot(raw[:-8])


def test_trajectory_directory(snapshot, tmp_path):
    trajectory = Trajectory()
    for k in range(3):
        trajectory.append(Field(snapshot.grid, snapshot.values * 0.5, 0.1 * k))
    write_trajectory(tmp_path, trajectory)
    index = pd.read_csv(tmp_path / "index.csv")
    assert list(index.columns) == ["index", "time", "filename"]
    assert index["filename"].tolist()[0] == "snapshot_00000.bin"
    restored = read_trajectory(tmp_path)
    assert len(restored) == 3
    assert np.array_equal(restored.times, trajectory.times)


def test_profile_file(tmp_path):
    front = closed_form_front(0.25, np.eye(2), [0.6, 0.8], periods=(1.0, 2.0))
    path = write_profile(tmp_path / "front.prof", front)
    restored = read_profile(path)
    assert restored.speed == front.speed
    assert restored.shift == front.shift
    assert np.array_equal(restored.direction, front.direction)
    assert np.allclose(restored.table.xi, front.table.xi, atol=1e-12)
    assert np.array_equal(restored.table.values, front.table.values)
    assert restored.periods == (1.0, 2.0)
    diagnostics = pd.read_csv(tmp_path / "front_diagnostics.csv")
    assert diagnostics["outcome"].iloc[0] == "converged"


def test_profile_needs_uniform_grid(tmp_path):
    front = closed_form_front(0.25, np.eye(2), [0.0, 1.0])
    front.table.xi = front.table.xi**3
    with pytest.raises(StorageError, match="uniform"):
        write_profile(tmp_path / "front.prof", front)


def test_csv_keeps_full_precision(tmp_path):
    value = 1.0 / 3.0
    path = write_csv(tmp_path / "t.csv", [{"a": value}])
    assert pd.read_csv(path)["a"].iloc[0] == value


def test_manifest_checksums(snapshot, tmp_path):
    write_snapshot(tmp_path / "u.bin", snapshot)
    (tmp_path / "logs").mkdir()
    (tmp_path / "logs" / "run.log").write_text("noise")
    path = write_manifest(tmp_path, {"kind": "surface"}, {"total": 0.5}, status=2)
    manifest = json.loads(path.read_text())
    assert manifest["status"] == 2
    assert [o["path"] for o in manifest["outputs"]] == ["u.bin"]
    assert manifest["outputs"][0]["sha256"] == sha256_file(tmp_path / "u.bin")
    assert manifest["config"] == {"kind": "surface"}


def test_heatmap(snapshot, tmp_path):
    path = emit_heatmap(snapshot, tmp_path / "u.ppm")
    image = Image.open(path)
    assert image.size == (snapshot.grid.shape[1], snapshot.grid.shape[0])
    pixels = np.asarray(image)
    assert pixels[0, 0, 0] == 0
    assert pixels[-1, -1, 0] == 255


def test_heatmap_refuses_diverged_values(snapshot, tmp_path):
    bad = Field(snapshot.grid, snapshot.values + 0.5, snapshot.time)
    with pytest.raises(DivergenceError):
        emit_heatmap(bad, tmp_path / "u.ppm")


def test_figure(snapshot, tmp_path):
    line = np.array([[-1.0, 1.0], [1.0, 1.5]])
    path = emit_figure(snapshot, tmp_path / "u.png", [line])
    assert path.stat().st_size > 0
