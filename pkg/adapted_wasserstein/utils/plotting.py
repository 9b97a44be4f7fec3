"""Static SVG figures for convergence sweeps and verifier suites."""

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from loguru import logger  # noqa: E402

# identical inputs must give identical files
matplotlib.rcParams["svg.hashsalt"] = "adapted-wasserstein"
SVG_METADATA = {"Date": None}


def _save(fig: "plt.Figure", path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.debug(f"Wrote plot to {path}")
    return path


def plot_convergence(
    table: pd.DataFrame,
    path: Union[str, Path],
    x: str = "steps",
    y: str = "error",
    title: str = "AW_2^2 error against the closed form",
) -> Path:
    """Log-log line plot of `y` against `x`, one marker per row."""
    ordered = table.sort_values(x)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ordered[x], ordered[y], "o-", label=y)
    if "target" in ordered:
        ax.set_title(f"{title} (target {ordered['target'].iloc[0]:.6f})")
    else:
        ax.set_title(title)
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_slack(slacks: Sequence[float], path: Union[str, Path], title: str = "slack") -> Path:
    """Histogram of verifier slacks with the zero line marked."""
    values = np.asarray(slacks, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=max(5, min(40, len(values) // 2 or 1)), color="tab:blue", alpha=0.8)
    ax.axvline(0.0, color="tab:red", linestyle="--", linewidth=1)
    ax.set_title(f"{title} ({int(np.sum(values < 0.0))} negative of {len(values)})")
    ax.set_xlabel("rhs - lhs")
    ax.set_ylabel("instances")
    return _save(fig, path)
