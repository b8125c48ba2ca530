import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from rdfront.core.settings import Settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
CONSOLE_HANDLER = "rdfront-console"
FILE_HANDLER = "rdfront-file"

# chatty at DEBUG while figures are written
QUIET_LOGGERS = ("matplotlib", "PIL")


def setup_logging(
    log_dir: Optional[Union[str, Path]] = None, level: Optional[str] = None
) -> Optional[Path]:
    """Send records to the console and, for a run, to a rotating file in ``log_dir``.

    The console handler is attached once per process. The file handler follows
    the run: a different ``log_dir`` replaces the previous run's file. Returns
    the log file path, or None when only the console is set up.
    """
    root_logger = logging.getLogger()
    formatter = logging.Formatter(LOG_FORMAT)
    handlers = {h.get_name(): h for h in root_logger.handlers}

    if CONSOLE_HANDLER not in handlers:
        console_handler = logging.StreamHandler()
        console_handler.set_name(CONSOLE_HANDLER)
        console_handler.setFormatter(formatter)
        root_logger.addHandler(console_handler)

    log_path = None
    if log_dir is not None:
        log_path = (Path(log_dir) / Settings.LOG_FILE).absolute()
        previous = handlers.get(FILE_HANDLER)
        if previous is None or Path(previous.baseFilename) != log_path:
            if previous is not None:
                root_logger.removeHandler(previous)
                previous.close()
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = RotatingFileHandler(
                log_path, maxBytes=5 * 1024 * 1024, backupCount=2
            )
            file_handler.set_name(FILE_HANDLER)
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)

    name = (level or Settings.LOG_LEVEL).upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        numeric = logging.INFO
        root_logger.warning(f"Unknown log level {level!r}, using INFO")
    root_logger.setLevel(numeric)
    for quiet in QUIET_LOGGERS:
        logging.getLogger(quiet).setLevel(max(numeric, logging.WARNING))
    return log_path
