import os
import sys
import logging.config

from typing import Any, Dict, Optional

LEVEL_TO_COLOR_VALUE = {
    "DEBUG": "2",  # dim
    "INFO": "32",  # green
    "WARNING": "33",  # yellow
    "ERROR": "31",  # red
    "CRITICAL": "41",  # white on red
}

COLOR_START = "\033["
COLOR_RESET = "\033[0m"

CONSOLE_FORMAT = "%(asctime)s %(levelname)-8s %(name)s %(message)s"
FILE_FORMAT = "%(asctime)s %(levelname)-8s %(name)s [%(threadName)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# third-party loggers that flood debug output while plotting
NOISY_LOGGERS = ("matplotlib", "PIL")


class ColorFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        formatted = super().format(record)

        color_value = LEVEL_TO_COLOR_VALUE.get(record.levelname)
        if color_value is None:
            return formatted

        return f"{COLOR_START}{color_value}m{formatted}{COLOR_RESET}"


def logging_name_to_level(string: str) -> int:
    logging_level = logging.getLevelName(string.upper())

    if isinstance(logging_level, int):
        return logging_level

    raise ValueError(f"Unknown logging level passed: {string}")


def build_logging_config(
    level: int, color: bool = True, log_file: Optional[str] = None
) -> Dict[str, Any]:
    """
    Console output at `level`; with `log_file` every record from the package at DEBUG
    also goes to that file, so a long training run can be inspected afterwards.
    """

    handlers: Dict[str, Any] = {
        "console": {
            "level": level,
            "class": "logging.StreamHandler",
            "formatter": "color" if color else "plain",
        }
    }
    if log_file is not None:
        handlers["file"] = {
            "level": "DEBUG",
            "class": "logging.FileHandler",
            "filename": log_file,
            "mode": "a",
            "formatter": "file",
        }

    return {
        "version": 1,
        "formatters": {
            "plain": {"format": CONSOLE_FORMAT, "datefmt": DATE_FORMAT},
            "color": {"()": ColorFormatter, "format": CONSOLE_FORMAT, "datefmt": DATE_FORMAT},
            "file": {"format": FILE_FORMAT, "datefmt": DATE_FORMAT},
        },
        "handlers": handlers,
        "root": {
            "level": "DEBUG" if log_file is not None else level,
            "handlers": list(handlers),
        },
        "loggers": {
            name: {"level": max(level, logging.INFO)} for name in NOISY_LOGGERS
        },
        "disable_existing_loggers": False,
    }


def setup(verbosity: str = "info", color: bool = True, log_file: Optional[str] = None) -> None:
    level = logging_name_to_level(verbosity)

    # escape codes only make sense on a terminal
    color = color and sys.stderr.isatty()

    if log_file is not None and os.path.dirname(log_file):
        os.makedirs(os.path.dirname(log_file), exist_ok=True)

    logging.config.dictConfig(build_logging_config(level, color, log_file))
