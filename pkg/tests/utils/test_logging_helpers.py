"""Tests for the loguru sinks."""

from pathlib import Path

import pytest
from loguru import logger

from adapted_wasserstein.helpers.logging_helpers import add_console_sink, add_file_sink, log_pattern


@pytest.mark.unit
def test_file_sink_writes_debug_records(tmp_path: Path) -> None:
    assert log_pattern("unit", tmp_path).name == "unit_{time:YYYYMMDD}.log"
    handler = add_file_sink("unit", tmp_path / "logs")
    try:
        logger.debug("solver pivot 17")
    finally:
        logger.remove(handler)
    files = list((tmp_path / "logs").glob("unit_*.log"))
    assert len(files) == 1
    assert "solver pivot 17" in files[0].read_text(encoding="utf-8")


@pytest.mark.unit
def test_console_sink_only_when_verbose() -> None:
    assert add_console_sink(0) is None
    handler = add_console_sink(2)
    assert isinstance(handler, int)
    logger.remove(handler)
