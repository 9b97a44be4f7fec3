"""Logging helpers for the adapted Wasserstein toolkit."""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from adapted_wasserstein.core.constants import LOGS_FPATH

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level:^7} | {file.name}:{line} | {message}"


def log_pattern(source: str, logs_dir: Optional[Path] = None) -> Path:
    """`<logs_dir>/<source>_{time:YYYYMMDD}.log`; loguru fills in the date."""
    logs_dir = Path(logs_dir) if logs_dir is not None else LOGS_FPATH
    return logs_dir / f"{source}_{'{time:YYYYMMDD}'}.log"


def add_file_sink(source: str, logs_dir: Optional[Path] = None) -> int:
    """DEBUG+ file sink at `log_pattern(source, logs_dir)`, rotated at midnight.

    Old files are zipped and kept for a week. Returns the loguru handler id.
    """
    log_path = log_pattern(source, logs_dir)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    return logger.add(
        sink=str(log_path),
        level="DEBUG",
        format=LOG_FORMAT,
        rotation="00:00",
        retention="7 days",
        compression="zip",
    )


def configure_logger(source: str, logs_dir: Optional[Path] = None) -> Path:
    """Replace loguru's default sinks for one `aw` run.

    Args:
        source: Label for the run; becomes the log file prefix.
        logs_dir: Directory for the rotated log files. Defaults to `logs/`.

    Returns:
        The log file path pattern handed to loguru.
    """
    logger.remove()
    # solver failures and bad input still reach the terminal without -v
    logger.add(sink=sys.stderr, level="ERROR", format=LOG_FORMAT)
    add_file_sink(source, logs_dir)
    log_path = log_pattern(source, logs_dir)
    logger.info(f"Logging '{source}' to {log_path} (DEBUG+) and stderr (ERROR+).")
    return log_path


def add_console_sink(verbosity: int) -> Optional[int]:
    """Mirror INFO (-v) or DEBUG (-vv) records to stderr.

    Returns:
        The loguru handler id, or None when verbosity is 0.
    """
    if verbosity <= 0:
        return None
    level = "DEBUG" if verbosity > 1 else "INFO"
    return logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:HH:mm:ss}</green> | <level>{message}</level>",
    )
