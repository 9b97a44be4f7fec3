"""Output paths and deterministic CSV writing."""

from itertools import count
from pathlib import Path
from typing import Any, Iterable, Sequence

import pandas as pd
from loguru import logger


def unique_fpath(path: Path) -> Path:
    """`path`, or `stem_1.suffix`, `stem_2.suffix`, ... if it already exists."""
    path = Path(path)
    if not path.exists():
        return path
    for n in count(1):
        candidate = path.with_name(f"{path.stem}_{n}{path.suffix}")
        if not candidate.exists():
            return candidate
    raise AssertionError("unreachable")


def write_csv(
    rows: Iterable[Sequence[Any]], columns: Sequence[str], path: Path
) -> Path:
    """Write rows under a fixed header as UTF-8 CSV with `.` decimals.

    Floats are written with their shortest round-trip repr, so identical
    inputs give byte-identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def csv_text(rows: Iterable[Sequence[Any]], columns: Sequence[str]) -> str:
    """Render rows as CSV text (same format as `write_csv`)."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    return str(frame.to_csv(index=False, lineterminator="\n"))


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    """Write a DataFrame in the `write_csv` format."""
    return write_csv(frame.itertuples(index=False, name=None), list(frame.columns), path)
