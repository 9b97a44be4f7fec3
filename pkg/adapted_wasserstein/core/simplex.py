"""Dense two-phase tableau simplex.

Solves

    min c @ x  s.t.  a_eq @ x == b_eq,  a_ub @ x <= b_ub,  lower <= x <= upper

deterministically. Entering columns follow Dantzig's rule (most negative
reduced cost, lowest index on ties) and fall back to Bland's rule after a
run of degenerate pivots; leaving rows break ratio ties by the lowest basic
variable index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from loguru import logger

from adapted_wasserstein.core.errors import (
    InvalidInputError,
    ProblemSizeError,
    SolverError,
)

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
DEGENERATE_RUN = 50
MAX_TABLEAU_CELLS = 400_000_000


class LPStatus(str, Enum):
    """Outcome of `solve_lp`."""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(a: Optional[np.ndarray], n: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.size == 0:
        return np.zeros((0, n))
    if arr.shape[1] != n:
        raise InvalidInputError(f"{name} has {arr.shape[1]} columns, expected {n}")
    return arr


def _as_vector(b: Optional[np.ndarray], m: int, name: str) -> np.ndarray:
    if b is None:
        arr = np.zeros(0)
    else:
        arr = np.asarray(b, dtype=float).reshape(-1)
    if arr.size != m:
        raise InvalidInputError(f"{name} has length {arr.size}, expected {m}")
    return arr


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """A linear program in inequality/equality form.

    `lower` defaults to 0 and `upper` to +inf for every variable; use
    `-np.inf` / `np.inf` for free directions.
    """

    c: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        if n == 0:
            raise InvalidInputError("linear program has no variables")
        a_eq = _as_matrix(self.a_eq, n, "a_eq")
        a_ub = _as_matrix(self.a_ub, n, "a_ub")
        b_eq = _as_vector(self.b_eq, a_eq.shape[0], "b_eq")
        b_ub = _as_vector(self.b_ub, a_ub.shape[0], "b_ub")
        lower = np.zeros(n) if self.lower is None else _as_vector(self.lower, n, "lower")
        upper = (
            np.full(n, np.inf) if self.upper is None else _as_vector(self.upper, n, "upper")
        )
        for name, arr in (("c", c), ("a_eq", a_eq), ("b_eq", b_eq), ("a_ub", a_ub), ("b_ub", b_ub)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} has non-finite coefficients")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(lower > upper):
            raise InvalidInputError("variable bounds are inconsistent")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise InvalidInputError("variable bounds are inconsistent")
        for name, arr in (
            ("c", c), ("a_eq", a_eq), ("b_eq", b_eq), ("a_ub", a_ub),
            ("b_ub", b_ub), ("lower", lower), ("upper", upper),
        ):
            object.__setattr__(self, name, arr)

    @property
    def n_vars(self) -> int:
        return int(self.c.size)

    @property
    def n_rows(self) -> int:
        return int(self.a_eq.shape[0] + self.a_ub.shape[0])  # type: ignore[union-attr]


@dataclass(frozen=True, eq=False)
class LPResult:
    """Solver outcome; `value` and `x` are meaningful only when optimal."""

    status: LPStatus
    value: float
    x: Optional[np.ndarray]
    iterations: int

    def require_optimal(self, context: str = "linear program") -> "LPResult":
        if self.status is not LPStatus.OPTIMAL:
            raise SolverError(f"{context} is {self.status.value}")
        return self


class _Tableau:
    """Dense tableau with the objective in the last row."""

    def __init__(self, table: np.ndarray, basis: np.ndarray, n_artificial: int):
        self.T = table
        self.basis = basis
        self.n_cols = table.shape[1] - 1
        self.n_artificial = n_artificial
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, e: int) -> None:
        T = self.T
        T[r] /= T[r, e]
        col = T[:, e].copy()
        col[r] = 0.0
        rows = np.nonzero(col)[0]
        if rows.size:
            T[rows] -= np.outer(col[rows], T[r])
        T[:, e] = 0.0
        T[r, e] = 1.0
        self.basis[r] = e
        self.iterations += 1

    def _entering(self, active: int, bland: bool) -> int:
        reduced = self.T[-1, :active]
        candidates = np.nonzero(reduced < -COST_TOL)[0]
        if candidates.size == 0:
            return -1
        if bland:
            return int(candidates[0])
        return int(candidates[np.argmin(reduced[candidates])])

    def _leaving(self, e: int) -> tuple[int, float]:
        col = self.T[:-1, e]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return -1, np.inf
        ratios = self.T[rows, -1] / col[rows]
        best = float(ratios.min())
        ties = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        r = int(ties[np.argmin(self.basis[ties])])
        return r, best

    def run(self, active: int, max_iter: int) -> LPStatus:
        """Iterate to optimality over the first `active` columns."""
        degenerate = 0
        while True:
            if self.iterations >= max_iter:
                raise SolverError(f"simplex iteration limit {max_iter} reached")
            bland = degenerate >= DEGENERATE_RUN
            e = self._entering(active, bland)
            if e < 0:
                return LPStatus.OPTIMAL
            r, step = self._leaving(e)
            if r < 0:
                return LPStatus.UNBOUNDED
            if step <= PIVOT_TOL:
                degenerate += 1
                if degenerate == DEGENERATE_RUN:
                    logger.debug("simplex: degenerate run, switching to Bland's rule")
            else:
                degenerate = 0
            self.pivot(r, e)


def _standard_form(
    lp: LinearProgram,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    """Rewrite with nonnegative variables and equality rows.

    Returns (A, b, cost, src, sign, offset, n_slack_rows) where structural
    column k stands for `sign[k] * y_k` added to original variable `src[k]`.
    """
    n = lp.n_vars
    lower, upper = lp.lower, lp.upper
    src, sign = [], []
    offset = np.zeros(n)
    bounded_rows = []
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            src.append(j)
            sign.append(1.0)
            if np.isfinite(hi):
                bounded_rows.append((len(src) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            src.append(j)
            sign.append(-1.0)
        else:
            src.extend([j, j])
            sign.extend([1.0, -1.0])
    src_arr = np.array(src, dtype=int)
    sign_arr = np.array(sign)
    n_std = src_arr.size

    a_eq = lp.a_eq[:, src_arr] * sign_arr  # type: ignore[index]
    b_eq = lp.b_eq - lp.a_eq @ offset  # type: ignore[operator]
    a_ub = lp.a_ub[:, src_arr] * sign_arr  # type: ignore[index]
    b_ub = lp.b_ub - lp.a_ub @ offset  # type: ignore[operator]
    if bounded_rows:
        extra = np.zeros((len(bounded_rows), n_std))
        for i, (k, width) in enumerate(bounded_rows):
            extra[i, k] = 1.0
        a_ub = np.vstack([a_ub, extra])
        b_ub = np.concatenate([b_ub, [w for _, w in bounded_rows]])

    n_ub = a_ub.shape[0]
    m = a_eq.shape[0] + n_ub
    A = np.zeros((m, n_std + n_ub))
    A[: a_eq.shape[0], :n_std] = a_eq
    A[a_eq.shape[0]:, :n_std] = a_ub
    A[a_eq.shape[0]:, n_std:] = np.eye(n_ub)
    b = np.concatenate([b_eq, b_ub])
    cost = np.concatenate([lp.c[src_arr] * sign_arr, np.zeros(n_ub)])
    return A, b, cost, src_arr, sign_arr, offset, n_ub


def solve_lp(
    lp: LinearProgram,
    max_variables: Optional[int] = None,
    max_iter: Optional[int] = None,
) -> LPResult:
    """Solve `lp` exactly up to floating point.

    Args:
        lp: The program.
        max_variables: Size limit on original variables; defaults to the
            `AW_LP_MAX_VARIABLES` setting.
        max_iter: Pivot limit; defaults to 50 * (rows + columns).

    Raises:
        ProblemSizeError: the program exceeds the size limit.
        SolverError: the pivot limit was reached.
    """
    from adapted_wasserstein.settings import settings

    limit = max_variables if max_variables is not None else settings.lp_max_variables
    if lp.n_vars > limit:
        raise ProblemSizeError(f"LP has {lp.n_vars} variables, limit is {limit}")

    A, b, cost, src, sign, offset, n_ub = _standard_form(lp)
    m, n = A.shape
    const = float(lp.c @ offset)

    if m == 0:
        if np.any(cost < -COST_TOL):
            return LPResult(LPStatus.UNBOUNDED, np.nan, None, 0)
        return LPResult(LPStatus.OPTIMAL, const, offset.copy(), 0)

    flip = b < 0
    A[flip] *= -1.0
    b = np.abs(b)

    # slack columns of unflipped inequality rows start basic
    n_eq = m - n_ub
    basis = np.full(m, -1, dtype=int)
    for i in range(n_eq, m):
        if not flip[i]:
            basis[i] = (n - n_ub) + (i - n_eq)
    need_art = np.nonzero(basis < 0)[0]
    n_art = need_art.size
    if (m + 1) * (n + n_art + 1) > MAX_TABLEAU_CELLS:
        raise ProblemSizeError(f"tableau of {m} x {n + n_art} is too large")

    T = np.zeros((m + 1, n + n_art + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    for a, i in enumerate(need_art):
        T[i, n + a] = 1.0
        basis[i] = n + a
    tab = _Tableau(T, basis, n_art)
    iter_cap = max_iter if max_iter is not None else 50 * (m + n + n_art)
    logger.debug(f"simplex: {m} rows, {n} columns, {n_art} artificials")

    # ---- phase 1 ----
    if n_art:
        T[-1, :] = 0.0
        T[-1, :] -= T[need_art].sum(axis=0)
        T[-1, n: n + n_art] = 0.0
        tab.run(n + n_art, iter_cap)
        infeasibility = -T[-1, -1]
        if infeasibility > 1e-9 * (1.0 + float(b.max(initial=0.0))):
            logger.debug(f"simplex: infeasible (phase-1 value {infeasibility:.3e})")
            return LPResult(LPStatus.INFEASIBLE, np.nan, None, tab.iterations)
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n:
                candidates = np.nonzero(np.abs(T[r, :n]) > PIVOT_TOL)[0]
                if candidates.size:
                    tab.pivot(r, int(candidates[0]))
                else:
                    keep[r] = False
        rows = np.concatenate([np.nonzero(keep)[0], [m]])
        tab.T = np.ascontiguousarray(np.delete(tab.T[rows], np.s_[n: n + n_art], axis=1))
        tab.basis = tab.basis[keep]
        T = tab.T
        if not keep.all():
            logger.debug(f"simplex: dropped {int((~keep).sum())} redundant rows")

    # ---- phase 2 ----
    T[-1, :] = 0.0
    T[-1, :n] = cost
    for r, j in enumerate(tab.basis):
        if cost[j] != 0.0:
            T[-1] -= cost[j] * T[r]
    status = tab.run(n, iter_cap)
    if status is LPStatus.UNBOUNDED:
        return LPResult(status, -np.inf, None, tab.iterations)

    y = np.zeros(n)
    y[tab.basis] = T[:-1, -1]
    y = _refine(A, b, tab.basis, y)
    x = offset.copy()
    np.add.at(x, src, sign * y[: src.size])
    value = float(lp.c @ x)
    logger.debug(f"simplex: optimal {value:.12g} after {tab.iterations} pivots")
    return LPResult(LPStatus.OPTIMAL, value, x, tab.iterations)


def _refine(A: np.ndarray, b: np.ndarray, basis: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Re-solve the basic system to wash out pivoting round-off."""
    try:
        sol, *_ = np.linalg.lstsq(A[:, basis], b, rcond=None)
    except np.linalg.LinAlgError:
        return np.clip(y, 0.0, None)
    candidate = np.zeros_like(y)
    candidate[basis] = sol
    if np.linalg.norm(A @ candidate - b) <= np.linalg.norm(A @ y - b) and candidate.min() >= -1e-9:
        y = candidate
    return np.clip(y, 0.0, None)
