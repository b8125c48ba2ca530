import json

import pytest

from rdfront.core.settings import Settings


@pytest.fixture
def restore_settings():
    saved = Settings.to_dict()
    yield
    for key, value in saved.items():
        setattr(Settings, key, value)


def test_file_overlays_and_coerces(tmp_path, restore_settings):
    path = tmp_path / "settings.json"
    path.write_text(
        json.dumps({"DEFAULT_WORKERS": "2", "CFL_SAFETY": 1, "OUTPUT_DIR": "elsewhere"})
    )
    output_dir = Settings.OUTPUT_DIR
    assert Settings.load_from_file(path)
    assert Settings.DEFAULT_WORKERS == 2
    assert isinstance(Settings.CFL_SAFETY, float)
    assert Settings.OUTPUT_DIR == output_dir


def test_bad_values_keep_defaults(tmp_path, restore_settings):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"CSV_PRECISION": "many", "UNKNOWN": 3}))
    precision = Settings.CSV_PRECISION
    assert Settings.load_from_file(path)
    assert Settings.CSV_PRECISION == precision
    assert not hasattr(Settings, "UNKNOWN")


def test_missing_file(tmp_path):
    assert not Settings.load_from_file(tmp_path / "absent.json")


def test_manifest_echo_lists_every_setting():
    echo = Settings.to_dict()
    assert echo["SNAPSHOT_MAGIC"] == "RDFRONT1"
    assert set(echo) == set(Settings.__annotations__)
