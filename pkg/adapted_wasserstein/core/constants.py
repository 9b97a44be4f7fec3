"""Constants for the core module."""

import math
from pathlib import Path

# --- I/O --- #
OUTPUT_FPATH: Path = Path("output")
LOGS_FPATH: Path = Path("logs")

# --- Tolerances --- #
LOCAL_PROB_TOL: float = 1e-12
GLOBAL_PROB_TOL: float = 1e-10
MARGINAL_TOL: float = 1e-9
CAUSALITY_TOL: float = 1e-9
SLACK_TOL: float = 1e-7
EXACT_TOL: float = 1e-9
# rounding slack added to tolerance comparisons
FLOAT_SLACK: float = 8 * 2.220446049250313e-16

# --- Solver limits --- #
DEFAULT_LP_MAX_VARIABLES: int = 50_000
FRANK_WOLFE_GAP: float = 1e-7
FRANK_WOLFE_MAX_ITER: int = 100_000
GRID_MAX_SUPPORT: int = 4
GOLDEN_SECTION_TOL: float = 1e-8
CUTTING_PLANE_TOL: float = 1e-6
MAX_TREE_LEAVES: int = 1 << 16

# --- Burkholder-Davis-Gundy constants --- #
BDG_B1: float = 6.0
BDG_B2: float = 2.0

# --- Reference values --- #
INV_SQRT_2PI: float = 1.0 / math.sqrt(2.0 * math.pi)
QV_CONVENTION: str = "realized"
