"""Terminal wealth laws and the risk functionals evaluated on them."""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from loguru import logger

from adapted_wasserstein.core.constants import GOLDEN_SECTION_TOL
from adapted_wasserstein.core.errors import InvalidInputError, SolverError
from adapted_wasserstein.core.hedging.specs import Claim, LossSpec, Strategy
from adapted_wasserstein.core.scenario import (
    DiscreteDistribution,
    ScenarioTree,
    ensure_valid,
    to_path_law,
)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def wealth_distribution(
    tree: ScenarioTree,
    strategy: Optional[Strategy] = None,
    claim: Optional[Claim] = None,
    m: float = 0.0,
) -> DiscreteDistribution:
    """Law of C - m - (H.X)_T, or of m + (H.X)_T when there is no claim."""
    ensure_valid(tree)
    law = to_path_law(tree)
    if strategy is None:
        gains = np.zeros(law.size)
    else:
        strategy.check_tree(tree)
        gains = strategy.gains()
    if claim is None:
        values = m + gains
    else:
        values = claim.evaluate(tree) - m - gains
    return DiscreteDistribution.from_atoms(values, law.probs, normalize=True)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")


def avar(dist: DiscreteDistribution, alpha: float) -> float:
    """AVaR_alpha(Z) = min_m m + E[(Z - m)^+] / alpha, minimized over the atoms."""
    _check_alpha(alpha)
    z, w = dist.values, dist.weights
    excess = np.maximum(z[None, :] - z[:, None], 0.0) @ w
    return float(np.min(z + excess / alpha))


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, tol: float = GOLDEN_SECTION_TOL
) -> tuple[float, float]:
    """Minimize a unimodal f on [lo, hi]; returns (argmin, min)."""
    a, b = lo, hi
    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def convex_bracket(
    f: Callable[[float], float], lo: float, hi: float, max_doublings: int = 60
) -> tuple[float, float]:
    """Widen [lo, hi] until a convex f no longer decreases past either end."""
    width = max(hi - lo, 1.0)
    for _ in range(max_doublings):
        moved = False
        if f(lo - width) < f(lo):
            lo -= width
            moved = True
        if f(hi + width) < f(hi):
            hi += width
            moved = True
        if not moved:
            return lo, hi
        width *= 2.0
    raise SolverError("could not bracket the minimizer")


def oce_risk(dist: DiscreteDistribution, loss: LossSpec) -> float:
    """Optimized certainty equivalent inf_m m + E[l(Z - m)].

    Piecewise-linear losses are minimized exactly over the kinks z_i - b_j;
    other losses by golden section on a bracket around the atoms.
    """
    loss.ensure_valid()
    z, w = dist.values, dist.weights

    def objective(m: float) -> float:
        return m + float(np.dot(w, loss.loss(z - m)))

    if loss.piecewise_linear:
        slopes = [s for s, _ in loss.pieces]
        if max(slopes) < 1.0 or min(slopes) > 1.0:
            raise InvalidInputError(
                f"loss '{loss.name}' has slopes in [{min(slopes)}, {max(slopes)}]; "
                "the certainty equivalent is unbounded unless 1 lies in that range"
            )
        kinks = _kinks(loss)
        candidates = (z[:, None] - kinks[None, :]).ravel()
        return float(min(objective(m) for m in candidates))

    lo, hi = convex_bracket(objective, float(z.min()) - 1.0, float(z.max()) + 1.0)
    _, value = golden_section(objective, lo, hi)
    logger.debug(f"oce_risk: {loss.name} on [{lo:.4g}, {hi:.4g}] -> {value:.10g}")
    return float(value)


def _kinks(loss: LossSpec) -> np.ndarray:
    """Breakpoints of a max-of-affine loss (intersections of its pieces)."""
    pts = [0.0]
    for i, (s1, c1) in enumerate(loss.pieces):
        for s2, c2 in loss.pieces[i + 1:]:
            if s1 != s2:
                pts.append((c2 - c1) / (s1 - s2))
    return np.unique(np.array(pts))
