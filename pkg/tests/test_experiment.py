import json
import logging
from pathlib import Path

import pandas as pd
import pytest

from rdfront.core.errors import ConfigurationError
from rdfront.core.logging_config import FILE_HANDLER, setup_logging
from rdfront.main import main, read_config
from rdfront.models.experiment import ExperimentKind
from rdfront.services.experiment_service import (
    STATUS_ASSERTION,
    STATUS_FAULT,
    STATUS_OK,
    ExperimentService,
    run_experiment,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_ini(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def test_read_config():
    config = read_config(CONFIGS / "surface.ini")
    assert config.experiment.kind == ExperimentKind.SURFACE
    assert config.geometry.e0 == [0.0, 1.0]
    assert config.geometry.angles == [45.0, 135.0]
    assert config.medium.theta == 0.25


def test_requested_kind_must_match_the_file():
    with pytest.raises(ConfigurationError, match="declares kind"):
        read_config(CONFIGS / "surface.ini", "conditions")


def test_unknown_keys_are_rejected(tmp_path):
    path = write_ini(
        tmp_path / "bad.ini",
        "[experiment]\nkind = surface\n[geometry]\ne0 = 0, 1\nbeta = 3\n",
    )
    with pytest.raises(ConfigurationError, match="beta"):
        read_config(path)


def test_geometry_kinds_need_a_geometry_section(tmp_path):
    path = write_ini(tmp_path / "bare.ini", "[experiment]\nkind = conditions\n")
    with pytest.raises(ConfigurationError, match="geometry"):
        read_config(path)


def test_surface_run(tmp_path):
    out = tmp_path / "surface"
    argv = ["surface", "--config", str(CONFIGS / "surface.ini"), "--out", str(out)]
    status = main(argv)
    assert status == STATUS_OK
    table = pd.read_csv(out / "surface.csv")
    assert len(table) == 401
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == STATUS_OK
    paths = {o["path"] for o in manifest["outputs"]}
    assert {"surface.csv", "summary.txt"} <= paths
    assert not any(p.startswith("logs/") for p in paths)
    assert (out / "summary.txt").read_text().splitlines()[-1] == "status: 0"


def test_malformed_config_is_a_fault(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    path = write_ini(tmp_path / "broken.ini", "kind = surface\n")
    assert main(["surface", "--config", str(path)]) == STATUS_FAULT
    assert "ERROR" in capsys.readouterr().err


@pytest.mark.parametrize(
    "name,passing",
    [("conditions.ini", "V"), ("conditions-reversed.ini", "W")],
)
def test_condition_runs(tmp_path, name, passing):
    config = read_config(CONFIGS / name)
    result = run_experiment(config, tmp_path)
    assert result.status == STATUS_OK
    assert result.assertions == {"variants_exclusive": True}
    frame = pd.read_csv(tmp_path / "conditions.csv")
    verdicts = frame.groupby("variant")["verdict"].apply(set)
    assert verdicts[passing] == {"pass"}
    assert "admissible: True" in (tmp_path / "conditions.txt").read_text()


def test_fault_inside_a_run_is_recorded(tmp_path):
    path = write_ini(
        tmp_path / "surface3.ini",
        "[experiment]\nkind = surface\n[geometry]\ne0 = 0, 0, 1\n",
    )
    result = run_experiment(read_config(path), tmp_path / "out")
    assert result.status == STATUS_FAULT
    assert result.faults[0]["type"] == "ConfigurationError"
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["faults"] == result.faults


def test_failed_assertion_status(tmp_path, monkeypatch):
    monkeypatch.setattr(
        ExperimentService, "run_surface", lambda self: ({"convexity": False}, [])
    )
    result = run_experiment(read_config(CONFIGS / "surface.ini"), tmp_path)
    assert result.status == STATUS_ASSERTION
    assert "[FAIL] convexity" in result.summary


@pytest.mark.slow
def test_front_speed_run(tmp_path):
    result = run_experiment(read_config(CONFIGS / "front-speed.ini"), tmp_path)
    assert result.status == STATUS_OK
    assert result.assertions["speed_oracle"]
    assert (tmp_path / "front.csv").exists()


@pytest.mark.slow
def test_verify_bounds_run(tmp_path):
    result = run_experiment(read_config(CONFIGS / "verify-bounds.ini"), tmp_path)
    assert result.status != STATUS_FAULT
    assert result.assertions["speed_margin"]
    assert result.assertions["calibration"]
    for name in ("margin.csv", "calibration.csv", "vertex.csv", "squeeze.csv"):
        assert (tmp_path / name).exists()


def test_log_file_follows_the_run(tmp_path):
    first = setup_logging(tmp_path / "a" / "logs", "info")
    second = setup_logging(tmp_path / "b" / "logs", "info")
    root = logging.getLogger()
    files = [h for h in root.handlers if h.get_name() == FILE_HANDLER]
    try:
        assert len(files) == 1
        assert Path(files[0].baseFilename) == second
        logging.getLogger("rdfront.test").info("second run")
        files[0].flush()
        assert "second run" in second.read_text()
        assert "second run" not in first.read_text()
    finally:
        for handler in files:
            root.removeHandler(handler)
            handler.close()


def test_stability_config_carries_facet_weights():
    config = read_config(CONFIGS / "stability.ini")
    assert config.stability.facet_weights == [0.125, 0.125]
    kinds = ["planar-mix", "clamped-super", "ridge-bump"]
    assert config.stability.initial_data == kinds
