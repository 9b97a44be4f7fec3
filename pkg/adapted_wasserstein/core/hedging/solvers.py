"""Optimal hedging problems over bounded predictable strategies.

Strategy variables are the positions at `tree.internal_nodes`. The gains
of every leaf path are linear in them: (H.X)_T = D @ h, where D[w, u] is the
price move after node u along path w (zero off the path).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
from loguru import logger

from adapted_wasserstein.core.constants import CUTTING_PLANE_TOL
from adapted_wasserstein.core.errors import InvalidInputError, ProblemSizeError, SolverError
from adapted_wasserstein.core.hedging.risk import (
    convex_bracket,
    golden_section,
    wealth_distribution,
)
from adapted_wasserstein.core.hedging.specs import (
    Claim,
    LossSpec,
    Strategy,
    UtilitySpec,
    positive_part,
)
from adapted_wasserstein.core.lattice import BinomialLattice, replicate
from adapted_wasserstein.core.scenario import ScenarioTree, ensure_valid, to_path_law
from adapted_wasserstein.core.simplex import LinearProgram, solve_lp
from adapted_wasserstein.core.transport import wasserstein

MAX_CUTS = 2_000


@dataclass
class HedgeResult:
    """Optimal value with the optimizing strategy and capital where defined."""

    value: float
    strategy: Optional[Strategy] = None
    m: Optional[float] = None
    method: str = "lp"
    meta: dict[str, Any] = field(default_factory=dict)


def increment_matrix(tree: ScenarioTree) -> np.ndarray:
    """D[w, i] = x_{t+1} - x_t along path w if it passes internal node i."""
    law = to_path_law(ensure_valid(tree))
    col = {u: i for i, u in enumerate(tree.internal_nodes)}
    D = np.zeros((law.size, len(col)))
    steps = np.diff(law.paths, axis=1)
    for t in range(tree.horizon):
        for w in range(law.size):
            D[w, col[int(law.nodes[w, t])]] = steps[w, t]
    return D


def _check_k(k: float) -> None:
    if not (np.isfinite(k) and k >= 0):
        raise InvalidInputError(f"strategy bound k must be finite and >= 0, got {k}")


def _problem(tree: ScenarioTree, claim: Optional[Claim]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    law = to_path_law(ensure_valid(tree))
    payoff = claim.evaluate(tree) if claim is not None else np.zeros(law.size)
    return increment_matrix(tree), law.probs, payoff


# ---------------------------------------------------------------------------
# AVaR hedging and superhedging
# ---------------------------------------------------------------------------


def optimal_avar_hedge(
    model: Union[ScenarioTree, BinomialLattice], claim: Claim, k: float, alpha: float
) -> HedgeResult:
    """inf over |H| <= k of AVaR_alpha(C - (H.X)_T).

    Trees are solved by the LP in (m, h, s):
    min m + sum_w p_w s_w / alpha  s.t.  s_w >= C_w - m - (D h)_w, s >= 0.
    Lattices use replication when it is admissible, else tree expansion.
    """
    _check_k(k)
    if not 0 < alpha <= 1:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    if isinstance(model, BinomialLattice):
        return _lattice_avar_hedge(model, claim, k, alpha)

    D, probs, payoff = _problem(model, claim)
    n, d = D.shape
    # variables: m | h (d) | s (n)
    c = np.concatenate([[1.0], np.zeros(d), probs / alpha])
    a_ub = np.hstack([-np.ones((n, 1)), -D, -np.eye(n)])
    lower = np.concatenate([[-np.inf], np.full(d, -k), np.zeros(n)])
    upper = np.concatenate([[np.inf], np.full(d, k), np.full(n, np.inf)])
    res = solve_lp(
        LinearProgram(c=c, a_ub=a_ub, b_ub=-payoff, lower=lower, upper=upper)
    ).require_optimal("AVaR hedge LP")
    x = res.x  # type: ignore[assignment]
    strategy = Strategy.from_vector(model, k, x[1: 1 + d])
    logger.debug(f"optimal_avar_hedge: value {res.value:.10g} after {res.iterations} pivots")
    return HedgeResult(res.value, strategy, float(x[0]), "lp", {"pivots": res.iterations})


def _lattice_avar_hedge(
    lattice: BinomialLattice, claim: Claim, k: float, alpha: float
) -> HedgeResult:
    """On a martingale lattice AVaR(C - H.X) >= E[C] for every H, with
    equality for the replicating delta; used whenever that delta is within k."""
    if claim.terminal is None:
        raise InvalidInputError(f"claim '{claim.name}' is path dependent; lattices need X_T claims")
    if lattice.is_martingale():
        rep = replicate(lattice, claim.terminal)
        worst = max((float(np.max(np.abs(dl))) for dl in rep.delta), default=0.0)
        if worst <= k + 1e-12:
            return HedgeResult(
                rep.price, None, rep.price, "replication", {"max_delta": worst}
            )
        logger.debug(f"replicating delta {worst:.4g} exceeds k = {k}; expanding the lattice")
    try:
        tree = lattice.to_tree()
    except ProblemSizeError as e:
        raise ProblemSizeError(
            f"lattice hedge needs the LP and the tree expansion is too large: {e}"
        ) from e
    return optimal_avar_hedge(tree, claim, k, alpha)


def superhedge_price(tree: ScenarioTree, claim: Claim, k: float) -> HedgeResult:
    """min m s.t. m + (H.X)_T >= C on every leaf, |H| <= k."""
    _check_k(k)
    D, _, payoff = _problem(tree, claim)
    n, d = D.shape
    c = np.concatenate([[1.0], np.zeros(d)])
    a_ub = np.hstack([-np.ones((n, 1)), -D])
    lower = np.concatenate([[-np.inf], np.full(d, -k)])
    upper = np.concatenate([[np.inf], np.full(d, k)])
    res = solve_lp(
        LinearProgram(c=c, a_ub=a_ub, b_ub=-payoff, lower=lower, upper=upper)
    ).require_optimal("superhedging LP")
    x = res.x  # type: ignore[assignment]
    return HedgeResult(res.value, Strategy.from_vector(tree, k, x[1:]), res.value, "lp")


# ---------------------------------------------------------------------------
# Expected loss and OCE hedging
# ---------------------------------------------------------------------------


def _max_affine_lp(
    D: np.ndarray,
    probs: np.ndarray,
    payoff: np.ndarray,
    k: float,
    pieces: Sequence[tuple[float, float]],
    m: Optional[float],
) -> tuple[float, np.ndarray, float]:
    """min [m +] sum_w p_w s_w  s.t.  s_w >= a_j (C_w - m - (D h)_w) + c_j.

    With `m` given it is fixed, otherwise it is a free variable.
    Returns (value, h, m).
    """
    n, d = D.shape
    free_m = m is None
    offset = 1 if free_m else 0
    rows, rhs = [], []
    for slope, intercept in pieces:
        block = np.zeros((n, offset + d + n))
        if free_m:
            block[:, 0] = -slope
        block[:, offset: offset + d] = -slope * D
        block[:, offset + d:] = -np.eye(n)
        rows.append(block)
        shift = 0.0 if free_m else float(m)  # type: ignore[arg-type]
        rhs.append(-(slope * (payoff - shift) + intercept))
    c = np.concatenate([[1.0] if free_m else [], np.zeros(d), probs])
    lower = np.concatenate([[-np.inf] if free_m else [], np.full(d, -k), np.full(n, -np.inf)])
    upper = np.concatenate([[np.inf] if free_m else [], np.full(d, k), np.full(n, np.inf)])
    res = solve_lp(
        LinearProgram(c=c, a_ub=np.vstack(rows), b_ub=np.concatenate(rhs), lower=lower, upper=upper)
    ).require_optimal("loss hedge LP")
    x = res.x  # type: ignore[assignment]
    m_opt = float(x[0]) if free_m else float(m)  # type: ignore[arg-type]
    return res.value, x[offset: offset + d], m_opt


def _kelley(
    oracle: Callable[[np.ndarray], tuple[float, np.ndarray]],
    d: int,
    k: float,
    tol: float,
) -> tuple[float, np.ndarray, int]:
    """Kelley's cutting-plane method for a convex oracle on the box [-k, k]^d.

    Stops once the best value found is within `tol` of the master LP bound.
    """
    h = np.zeros(d)
    best_val, grad = oracle(h)
    best_h = h
    if d == 0:
        return best_val, best_h, 0
    cuts_a: list[np.ndarray] = []
    cuts_b: list[float] = []
    for it in range(1, MAX_CUTS + 1):
        # theta >= f(h_i) + g_i . (h - h_i)
        value, grad = oracle(h)
        if value < best_val:
            best_val, best_h = value, h
        cuts_a.append(np.concatenate([grad, [-1.0]]))
        cuts_b.append(float(grad @ h) - value)
        res = solve_lp(
            LinearProgram(
                c=np.concatenate([np.zeros(d), [1.0]]),
                a_ub=np.array(cuts_a),
                b_ub=np.array(cuts_b),
                lower=np.concatenate([np.full(d, -k), [-np.inf]]),
                upper=np.concatenate([np.full(d, k), [np.inf]]),
            )
        ).require_optimal("cutting-plane master")
        lower_bound = res.value
        if best_val - lower_bound <= tol:
            logger.debug(f"cutting plane: gap {best_val - lower_bound:.2e} after {it} cuts")
            return best_val, best_h, it
        h = res.x[:d]  # type: ignore[index]
    raise SolverError(f"cutting plane did not reach gap {tol} within {MAX_CUTS} cuts")


def _cutting_plane(
    D: np.ndarray,
    probs: np.ndarray,
    payoff: np.ndarray,
    k: float,
    m: float,
    loss: LossSpec,
    tol: float = CUTTING_PLANE_TOL,
) -> tuple[float, np.ndarray, int]:
    """min_h sum_w p_w l(C_w - m - (D h)_w) on the box."""

    def oracle(h: np.ndarray) -> tuple[float, np.ndarray]:
        resid = payoff - m - D @ h
        value = float(np.dot(probs, loss.loss(resid)))
        grad = -D.T @ (probs * loss.dloss(resid))
        return value, grad

    return _kelley(oracle, D.shape[1], k, tol)


def expected_loss_hedge(
    tree: ScenarioTree,
    claim: Claim,
    k: float,
    m: float,
    loss: Optional[LossSpec] = None,
    method: str = "auto",
) -> HedgeResult:
    """min over |H| <= k of E[l(C - m - (H.X)_T)], positive part by default.

    `method` is "lp" (piecewise-linear losses only), "cutting_plane", or
    "auto" (LP when possible). "cutting_plane" is Kelley's method: an LP
    master over accumulated subgradient cuts, stopped when the best value
    found is within 1e-6 of the master bound. It serves smooth convex
    losses such as `exponential_loss`.
    """
    _check_k(k)
    loss = (loss or positive_part()).ensure_valid()
    D, probs, payoff = _problem(tree, claim)
    if method == "auto":
        method = "lp" if loss.piecewise_linear else "cutting_plane"
    if method == "lp":
        if not loss.piecewise_linear:
            raise InvalidInputError(f"loss '{loss.name}' is not piecewise linear; use cutting_plane")
        value, h, _ = _max_affine_lp(D, probs, payoff, k, loss.pieces, m)
        return HedgeResult(value, Strategy.from_vector(tree, k, h), m, "lp")
    if method == "cutting_plane":
        value, h, cuts = _cutting_plane(D, probs, payoff, k, m, loss)
        return HedgeResult(value, Strategy.from_vector(tree, k, h), m, "cutting_plane", {"cuts": cuts})
    raise InvalidInputError(f"unknown method '{method}'")


def optimal_oce_hedge(tree: ScenarioTree, claim: Claim, k: float, loss: LossSpec) -> HedgeResult:
    """inf over |H| <= k of the OCE of C - (H.X)_T.

    Exact LP in (m, h, s) for piecewise-linear losses; otherwise golden
    section over m around the cutting-plane hedge, which is convex in m.
    """
    _check_k(k)
    loss.ensure_valid()
    D, probs, payoff = _problem(tree, claim)
    if loss.piecewise_linear:
        slopes = [s for s, _ in loss.pieces]
        if max(slopes) < 1.0 or min(slopes) > 1.0:
            raise InvalidInputError(f"certainty equivalent of '{loss.name}' is unbounded")
        value, h, m = _max_affine_lp(D, probs, payoff, k, loss.pieces, None)
        return HedgeResult(value, Strategy.from_vector(tree, k, h), m, "lp")

    def outer(m: float) -> float:
        return m + _cutting_plane(D, probs, payoff, k, m, loss)[0]

    lo, hi = convex_bracket(outer, float(payoff.min()) - 1.0, float(payoff.max()) + 1.0)
    m_opt, value = golden_section(outer, lo, hi)
    _, h, _ = _cutting_plane(D, probs, payoff, k, m_opt, loss)
    return HedgeResult(value, Strategy.from_vector(tree, k, h), m_opt, "golden_section")


# ---------------------------------------------------------------------------
# Utility maximization and indifference pricing
# ---------------------------------------------------------------------------


def utility_objective(
    tree: ScenarioTree,
    claim: Optional[Claim],
    utility: UtilitySpec,
    h: np.ndarray,
) -> tuple[float, np.ndarray]:
    """E[U(C + D h)] and its gradient D^T (p * U'(C + D h))."""
    D, probs, payoff = _problem(tree, claim)
    wealth = payoff + D @ h
    return float(np.dot(probs, utility.u(wealth))), D.T @ (probs * utility.du(wealth))


def _min_affine_utility_lp(
    D: np.ndarray,
    probs: np.ndarray,
    payoff: np.ndarray,
    k: float,
    pieces: Sequence[tuple[float, float]],
) -> tuple[float, np.ndarray]:
    """max sum_w p_w t_w  s.t.  t_w <= a_j (C_w + (D h)_w) + b_j.  Returns (value, h)."""
    n, d = D.shape
    rows, rhs = [], []
    for slope, intercept in pieces:
        block = np.zeros((n, d + n))
        block[:, :d] = -slope * D
        block[:, d:] = np.eye(n)
        rows.append(block)
        rhs.append(slope * payoff + intercept)
    res = solve_lp(
        LinearProgram(
            c=np.concatenate([np.zeros(d), -probs]),
            a_ub=np.vstack(rows),
            b_ub=np.concatenate(rhs),
            lower=np.concatenate([np.full(d, -k), np.full(n, -np.inf)]),
            upper=np.concatenate([np.full(d, k), np.full(n, np.inf)]),
        )
    ).require_optimal("utility LP")
    return -res.value, res.x[:d]  # type: ignore[index]


def utility_maximize(
    tree: ScenarioTree,
    claim: Optional[Claim],
    k: float,
    utility: UtilitySpec,
    method: str = "auto",
    tol: float = CUTTING_PLANE_TOL,
) -> HedgeResult:
    """sup over |H| <= k of E[U(C + (H.X)_T)].

    `method` is "lp" (piecewise-linear utilities only), "cutting_plane", or
    "auto" (LP when possible). The cutting-plane run minimizes -E[U] with
    supergradients built from the left derivative and stops at a certified
    gap of `tol`. The value is attained by the returned strategy.
    """
    _check_k(k)
    utility.ensure_valid()
    D, probs, payoff = _problem(tree, claim)
    if method == "auto":
        method = "lp" if utility.piecewise_linear else "cutting_plane"
    if method == "lp":
        if not utility.piecewise_linear:
            raise InvalidInputError(f"utility '{utility.name}' is not piecewise linear; use cutting_plane")
        _, h = _min_affine_utility_lp(D, probs, payoff, k, utility.pieces)
        value = float(np.dot(probs, utility.u(payoff + D @ h)))
        return HedgeResult(value, Strategy.from_vector(tree, k, h), None, "lp")
    if method != "cutting_plane":
        raise InvalidInputError(f"unknown method '{method}'")

    def oracle(h: np.ndarray) -> tuple[float, np.ndarray]:
        wealth = payoff + D @ h
        return -float(np.dot(probs, utility.u(wealth))), -D.T @ (probs * utility.du(wealth))

    neg_value, h, cuts = _kelley(oracle, D.shape[1], k, tol)
    logger.debug(f"utility_maximize: {utility.name} value {-neg_value:.10g} after {cuts} cuts")
    return HedgeResult(-neg_value, Strategy.from_vector(tree, k, h), None, "cutting_plane", {"cuts": cuts})


def indifference_price(
    tree: ScenarioTree,
    claim: Claim,
    k: float,
    utility: UtilitySpec,
    tol: float = 1e-8,
    max_expansions: int = 60,
) -> float:
    """Bid price v solving sup_H E[U(C - v + H.X)] = sup_H E[U(H.X)].

    Bisection on the strictly decreasing gap, starting from the bracket
    [min C - 1, max C + 1] and widening it geometrically.
    """
    if not utility.strictly_increasing:
        raise InvalidInputError(f"utility '{utility.name}' must be strictly increasing")
    base = utility_maximize(tree, None, k, utility).value
    payoff = claim.evaluate(tree)

    def gap(v: float) -> float:
        return utility_maximize(tree, claim.shifted(-v), k, utility).value - base

    lo, hi = float(payoff.min()) - 1.0, float(payoff.max()) + 1.0
    width = hi - lo
    for _ in range(max_expansions):
        if gap(lo) >= 0.0 and gap(hi) <= 0.0:
            break
        logger.warning(f"indifference_price: widening bracket [{lo:.4g}, {hi:.4g}]")
        lo, hi, width = lo - width, hi + width, 2.0 * width
    else:
        raise SolverError("indifference price bracket not found")

    while True:
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if abs(g) < tol or hi - lo < 1e-13 * max(1.0, abs(mid)):
            break
        if g > 0.0:
            lo = mid
        else:
            hi = mid
    logger.debug(f"indifference_price: {mid:.10g} with gap {g:.2e}")
    return float(mid)


# ---------------------------------------------------------------------------
# Model uncertainty gauge
# ---------------------------------------------------------------------------


@dataclass
class PriceRange:
    low: float
    high: float
    envelope: float


def price_range(trees: Sequence[ScenarioTree], claim: Claim) -> PriceRange:
    """Spread of E_Q[C] across models with its L * max W_1 envelope."""
    if not trees:
        raise InvalidInputError("need at least one tree")
    prices = [wealth_distribution(t, None, claim).mean() for t in trees]
    worst = 0.0
    for i, a in enumerate(trees):
        for b in trees[i + 1:]:
            worst = max(worst, wasserstein(a, b, 1.0).value)
    return PriceRange(min(prices), max(prices), claim.lipschitz * worst)
