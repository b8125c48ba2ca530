"""
Process-wide settings for rdfront runs.

Defaults live on the class, ``settings.json`` overlays them and only the output
root comes from the environment (or a ``.env`` file).
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

REPO_ROOT = Path(__file__).resolve().parents[3]
ENV_ONLY = ("OUTPUT_DIR",)


class Settings:
    """Typed defaults shared by the services, storage and the runner"""

    # Output root for runs without --out
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "runs")

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = "rdfront.log"

    # Artifact formats
    CSV_PRECISION: int = 17
    SNAPSHOT_MAGIC: str = "RDFRONT1"
    PROFILE_MAGIC: str = "RDPROF01"

    # Execution
    DEFAULT_WORKERS: int = 4
    DEFAULT_SEED: int = 0

    # Time stepping defaults
    CFL_SAFETY: float = 0.9
    DIVERGENCE_BOUND: float = 1.1
    INNER_SOLVE_RTOL: float = 1e-10

    @classmethod
    def load_from_file(cls, file_path: Optional[Union[str, Path]] = None) -> bool:
        """Overlay values from a JSON file, coerced to each setting's type.

        Without a path, ``settings.json`` is looked up in the working directory
        and then at the repository root. Returns whether a file was applied.
        """
        candidates = (
            [Path(file_path)]
            if file_path is not None
            else [Path("settings.json"), REPO_ROOT / "settings.json"]
        )
        settings_path = next((p for p in candidates if p.is_file()), None)
        if settings_path is None:
            return False
        try:
            settings_data = json.loads(settings_path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error loading settings from {settings_path}: {e}")
            return False

        types = cls.__annotations__
        for key, value in settings_data.items():
            if key not in types or key in ENV_ONLY:
                logger.warning(f"Ignoring setting {key!r} from {settings_path}")
                continue
            try:
                setattr(cls, key, types[key](value))
            except (TypeError, ValueError):
                logger.warning(f"Setting {key}={value!r} is not a {types[key]}")
        return True

    @classmethod
    def to_dict(cls) -> Dict[str, Any]:
        """Current values, echoed into run manifests"""
        return {key: getattr(cls, key) for key in cls.__annotations__}


Settings.load_from_file()
