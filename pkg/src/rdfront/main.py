"""
Command-line entry point: rdfront <kind> --config <path> [options]
"""

import argparse
import configparser
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from rdfront.core.errors import ConfigurationError, fault_chain
from rdfront.core.logging_config import setup_logging
from rdfront.core.settings import Settings
from rdfront.models.experiment import ExperimentConfig, ExperimentKind
from rdfront.services.experiment_service import STATUS_FAULT, ExperimentService

load_dotenv()

logger = logging.getLogger(__name__)


def read_config(path: Path, kind: Optional[str] = None) -> ExperimentConfig:
    """Parse an INI experiment file and validate it before any computation."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r") as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e

    data: Dict[str, Dict[str, str]] = {
        section: dict(parser.items(section)) for section in parser.sections()
    }
    experiment = data.setdefault("experiment", {})
    if kind is not None:
        declared = experiment.get("kind")
        if declared is not None and declared != kind:
            raise ConfigurationError(
                f"config {path} declares kind '{declared}' but '{kind}' was requested"
            )
        experiment["kind"] = kind
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid config {path}:\n{e}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdfront",
        description="Curved transition fronts of bistable reaction-diffusion "
        "equations in periodic media.",
    )
    parser.add_argument("kind", choices=[k.value for k in ExperimentKind])
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--log-level", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = read_config(args.config, args.kind)
    except ConfigurationError as e:
        setup_logging(level=args.log_level)
        logger.error(f"Configuration error: {e}")
        print(f"ERROR: {e}", file=sys.stderr)
        for entry in fault_chain(e)[1:]:
            print(f"  caused by {entry['type']}: {entry['message']}", file=sys.stderr)
        return STATUS_FAULT

    service = ExperimentService(config, args.out, args.workers, args.seed)
    setup_logging(log_dir=str(service.output_dir / "logs"), level=args.log_level)
    kind = config.experiment.kind.value
    logger.info(f"rdfront {kind} (settings {Settings.to_dict()})")
    result = service.run()
    for line in result.summary:
        print(line)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
