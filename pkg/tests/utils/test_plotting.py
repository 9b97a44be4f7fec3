"""Tests for the SVG plots."""

from pathlib import Path

import pandas as pd
import pytest

from adapted_wasserstein.utils.plotting import plot_convergence, plot_slack


@pytest.mark.unit
def test_convergence_plot_is_reproducible(tmp_path: Path) -> None:
    """The same table renders to the same bytes."""
    table = pd.DataFrame(
        {"steps": [100, 25, 50], "error": [0.0002, 0.0009, 0.0004], "target": [0.011312] * 3}
    )
    first = plot_convergence(table, tmp_path / "a.svg")
    second = plot_convergence(table, tmp_path / "nested" / "b.svg")
    assert first.read_bytes() == second.read_bytes()
    assert "<svg" in first.read_text(encoding="utf-8")


@pytest.mark.unit
def test_slack_histogram(tmp_path: Path) -> None:
    path = plot_slack([0.5, 0.1, -0.01, 0.3], tmp_path / "slack.svg", title="whi slack")
    assert path.is_file()
    assert path.read_text(encoding="utf-8").lstrip().startswith("<?xml")
