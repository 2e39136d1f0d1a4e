import logging
import os
from pathlib import Path
from typing import Optional

import logzero
from dotenv import load_dotenv

# Load environment variables relative to this file
env_path = Path(__file__).parent.parent / ".env"
load_dotenv(dotenv_path=env_path)

LOGGER_NAME = "bragg_qft"
LOG_FORMAT = "%(levelname)s:     %(message)s"


def _env_level() -> int:
    return getattr(logging, os.environ.get("BRAGG_QFT_LOG_LEVEL", "INFO").upper(), logging.INFO)


def configure(verbose: bool = False, logfile: Optional[str] = None) -> logging.Logger:
    """
    (Re)configure the package logger.

    logzero.setup_logger reuses the named logger and swaps its handlers, so
    module-level references to `logger` stay valid after a CLI re-level.
    """
    return logzero.setup_logger(
        name=LOGGER_NAME,
        level=logging.DEBUG if verbose else _env_level(),
        formatter=logging.Formatter(LOG_FORMAT),
        logfile=logfile or os.environ.get("BRAGG_QFT_LOG_FILE"),
    )


logger = configure()

# Silence heavy loggers
logging.getLogger("matplotlib").setLevel(logging.ERROR)
logging.getLogger("numexpr").setLevel(logging.ERROR)
