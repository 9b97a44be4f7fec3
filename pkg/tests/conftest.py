"""Shared pytest fixtures: small trees, a seeded generator and file writers."""

from __future__ import annotations

import logging
import textwrap
from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from loguru import logger

from adapted_wasserstein.core.scenario import ScenarioTree
from adapted_wasserstein.helpers.logging_helpers import add_file_sink
from tests.helpers import binomial_walk, tree_from_paths


class _ToLoguru(logging.Handler):
    """Route stdlib records (matplotlib, asyncio, ...) into loguru."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level: str | int = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno
        logger.opt(depth=6, exception=record.exc_info).log(level, record.getMessage())


def pytest_configure(config: pytest.Config) -> None:
    """Write every test session to logs/pytest_YYYYMMDD.log as well."""
    add_file_sink("pytest", Path(__file__).resolve().parent.parent / "logs")
    logging.basicConfig(handlers=[_ToLoguru()], level=0, force=True)


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@pytest.fixture
def step_tree() -> ScenarioTree:
    """One step from 0 to +-1, each with probability 1/2."""
    return binomial_walk([1.0])


@pytest.fixture
def two_step_tree() -> ScenarioTree:
    """Two-step +-1 symmetric walk from 0."""
    return binomial_walk([1.0, 1.0])


@pytest.fixture
def drift_tree() -> ScenarioTree:
    """Two steps with a skewed second step, so the drift is non-zero."""
    return tree_from_paths(
        [(0.0, 1.0, 3.0), (0.0, 1.0, 0.0), (0.0, -1.0, -0.5), (0.0, -1.0, -2.0)],
        [0.25, 0.25, 0.3, 0.2],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator; tests stay deterministic."""
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


@pytest.fixture
def write_yaml(tmp_path: Path) -> Callable[[str, str], Path]:
    """`write_yaml(name, body)` dedents `body` into tmp_path/name."""

    def write(name: str, body: str) -> Path:
        target = tmp_path / name
        target.write_text(textwrap.dedent(body).strip() + "\n", encoding="utf-8")
        return target

    return write

