"""Sweeps and randomized suites behind the `verify` subcommands.

Instances are generated from `(seed, index)` so results do not depend on
the worker count; `map_ordered` returns them in input order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ConfigDict, Field

from adapted_wasserstein.core.bicausal import (
    MetricAxiomReport,
    adapted_wasserstein_dp,
    adapted_wasserstein_lp,
    check_metric_axioms,
    martingale_quadratic,
    nested_power,
    synchronous_value,
    unconstrained_transport,
)
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.hedging.projection import project_strategy
from adapted_wasserstein.core.hedging.risk import avar, wealth_distribution
from adapted_wasserstein.core.hedging.solvers import (
    optimal_avar_hedge,
    superhedge_price,
    utility_maximize,
)
from adapted_wasserstein.core.hedging.specs import (
    Strategy,
    constant_claim,
    linear_capped,
    piecewise_linear_loss,
    sign_strategy,
    tent_claim,
)
from adapted_wasserstein.core.hedging.verify import (
    VerificationReport,
    payoff_law,
    verify_avar_lipschitz,
    verify_contraction,
    verify_oce_stability,
    verify_shi,
    verify_whi,
)
from adapted_wasserstein.core.lattice import gbm_lattice, synchronous_cost
from adapted_wasserstein.core.models import (
    VolatilitySchedule,
    gbm_target,
    hidden_sign,
    information_split,
    leverage_avar,
    random_affine_claim,
    random_prefix_strategy,
    random_strategy,
    random_tree,
    random_walk_tree,
    scaling_formula,
    sign_arbitrage,
    sign_drift,
    sign_gap_limit,
    superhedge_jump,
    unbounded_leverage,
)
from adapted_wasserstein.core.scenario import canonicalize
from adapted_wasserstein.core.transport import wasserstein, weak_ot
from adapted_wasserstein.utils.serde import SerdeMixin

T = TypeVar("T")
R = TypeVar("R")

VERIFIER_CHECKS = ("whi", "shi", "avar", "contraction", "oce")


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> list[R]:
    """Apply `fn` to every item, in a process pool when `workers` > 1."""
    from adapted_wasserstein.settings import settings

    jobs = list(items)
    workers = workers or settings.workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    logger.debug(f"map_ordered: {len(jobs)} jobs on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


# ---------------------------------------------------------------------------
# Metric axioms and one-period collapse
# ---------------------------------------------------------------------------


def _metric_instance(job: tuple[int, int, float, int, int]) -> MetricAxiomReport:
    seed, index, p, horizon, max_children = job
    rng = _rng(seed, index)
    first = random_tree(rng, horizon, max_children)
    second = random_tree(rng, horizon, max_children)
    # every other triple carries an equal-law copy, so identity is tested both ways
    third = canonicalize(first) if index % 2 == 0 else random_tree(rng, horizon, max_children)
    return check_metric_axioms([first, second, third], p)


def metric_suite(
    seed: int = 0,
    instances: int = 50,
    p: float = 1.0,
    horizon: int = 2,
    max_children: int = 3,
    workers: Optional[int] = None,
) -> list[MetricAxiomReport]:
    jobs = [(seed, i, p, horizon, max_children) for i in range(instances)]
    return map_ordered(_metric_instance, jobs, workers)


def _collapse_instance(job: tuple[int, int, float, int]) -> dict[str, float]:
    seed, index, p, max_children = job
    rng = _rng(seed, index)
    first = random_tree(rng, 1, max_children)
    second = random_tree(rng, 1, max_children)
    aw = adapted_wasserstein_lp(first, second, p).value
    plain = unconstrained_transport(first, second, p).value
    return {
        "instance": index,
        "aw": aw,
        "transport": plain,
        "sup_norm_wasserstein": wasserstein(first, second, p).value,
        "error": abs(aw - plain),
    }


def collapse_suite(
    seed: int = 0,
    instances: int = 20,
    p: float = 1.0,
    max_children: int = 4,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """One-period pairs: AW_p against the unconstrained transport of the same cost."""
    jobs = [(seed, i, p, max_children) for i in range(instances)]
    return pd.DataFrame(map_ordered(_collapse_instance, jobs, workers))


# ---------------------------------------------------------------------------
# Scaling identity and GBM convergence
# ---------------------------------------------------------------------------


def _scaling_instance(job: tuple[int, int, int, str]) -> dict[str, Any]:
    seed, steps, pair, method = job
    rng = _rng(seed, steps * 1000 + pair)
    sigmas = rng.uniform(0.0, 2.0, size=steps)
    sigmas_hat = rng.uniform(0.0, 2.0, size=steps)
    first = random_walk_tree(steps, VolatilitySchedule.from_steps(sigmas))
    second = random_walk_tree(steps, VolatilitySchedule.from_steps(sigmas_hat))
    if method == "lp":
        value = adapted_wasserstein_lp(first, second, 2.0).value
    elif method == "dp":
        value = adapted_wasserstein_dp(first, second, martingale_quadratic()).value
    else:
        raise InvalidInputError(f"unknown method '{method}'")
    formula = scaling_formula(sigmas, sigmas_hat)
    return {
        "steps": steps,
        "pair": pair,
        "method": method,
        "aw2": value,
        "formula": formula,
        "error": abs(value - formula),
        "nested": adapted_wasserstein_dp(first, second, nested_power(2.0)).value,
    }


def scaling_suite(
    steps: Sequence[int] = (1, 2, 3, 4, 5, 6),
    pairs: int = 10,
    seed: int = 0,
    method: str = "lp",
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """AW_2 of binomial walks with random step volatilities against the closed form.

    The `nested` column is the nested distance of the same pair,
    which does not follow the closed form.
    """
    jobs = [(seed, n, j, method) for n in steps for j in range(pairs)]
    return pd.DataFrame(map_ordered(_scaling_instance, jobs, workers))


def _gbm_instance(job: tuple[float, float, int, float]) -> dict[str, float]:
    sigma1, sigma2, steps, horizon = job
    cost = synchronous_cost(
        gbm_lattice(steps, sigma1, horizon), gbm_lattice(steps, sigma2, horizon), 2.0
    ).expected_cost
    target = gbm_target(sigma1, sigma2, horizon)
    return {
        "steps": steps,
        "squared": cost,
        "target": target,
        "error": abs(cost - target),
        "rel_error": abs(cost - target) / target if target else 0.0,
    }


def gbm_suite(
    sigma1: float = 0.2,
    sigma2: float = 0.3,
    steps: Sequence[int] = (25, 50, 100),
    horizon: float = 1.0,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Synchronous AW_2^2 of binomial GBMs against the continuous-time closed form."""
    jobs = [(sigma1, sigma2, n, horizon) for n in steps]
    return pd.DataFrame(map_ordered(_gbm_instance, jobs, workers))


def gbm_converges(table: pd.DataFrame, rel_tol: float = 0.1) -> bool:
    """Errors decrease in N and the finest one is within `rel_tol`."""
    ordered = table.sort_values("steps")
    errors = ordered["error"].to_numpy()
    return bool(np.all(np.diff(errors) < 0.0) and ordered["rel_error"].iloc[-1] <= rel_tol)


# ---------------------------------------------------------------------------
# Counterexamples
# ---------------------------------------------------------------------------


class CounterexampleReport(SerdeMixin):
    """Numbers reproduced for each counterexample pair and their checks."""

    model_config = ConfigDict(extra="forbid")

    parameters: dict[str, float]
    items: dict[str, dict[str, float]]
    checks: dict[str, bool]
    notes: list[str] = Field(default_factory=list)
    passed: bool


def counterexample_report(
    n: int = 100,
    eps: float = 0.01,
    delta: float = 0.1,
    k: float = 1.0,
    alpha: float = 0.5,
    cap: float = 5.0,
    threshold: float = 1e3,
) -> CounterexampleReport:
    items: dict[str, dict[str, float]] = {}
    checks: dict[str, bool] = {}
    notes: list[str] = []
    zero = constant_claim(0.0)

    flat, split = information_split(delta)
    items["information_split"] = {
        "w1": wasserstein(flat, split, 1.0).value,
        "aw1": adapted_wasserstein_lp(flat, split, 1.0).value,
    }

    # sign strategy on the perturbed walk
    p_n, p = sign_arbitrage(n)
    utility = linear_capped(cap)
    held = sign_strategy(k).on_tree(p_n)
    sign_value = wealth_distribution(p_n, held).expect(utility.u)
    base = utility_maximize(p, None, k, utility).value
    best = utility_maximize(p_n, None, k, utility).value
    limit = sign_gap_limit(utility.u, k)
    w1 = wasserstein(p_n, p, 1.0).value
    items["sign_arbitrage"] = {
        "w1": w1,
        "aw1": adapted_wasserstein_lp(p_n, p, 1.0).value,
        "sign_value": sign_value,
        "optimized_value": best,
        "limit_value": base,
        "gap": sign_value - base,
        "gap_limit": limit,
        "full_utility_gap": 2.0 * limit,
    }
    checks["sign_arbitrage"] = w1 < 0.02 and sign_value - base >= 0.9 * limit
    notes.append(
        "sign strategy wealth is k(1-1/n) or -k/n with probability 1/2 each, "
        "so its utility gap tends to (U(k) - U(0)) / 2"
    )

    p_n, p = superhedge_jump(n)
    tent = tent_claim()
    items["superhedge_jump"] = {
        "w1": wasserstein(p_n, p, 1.0).value,
        "superhedge_n": superhedge_price(p_n, tent, k).value,
        "superhedge": superhedge_price(p, tent, k).value,
        "avar_n": optimal_avar_hedge(p_n, tent, k, alpha).value,
        "avar": optimal_avar_hedge(p, tent, k, alpha).value,
    }
    jump = items["superhedge_jump"]
    checks["superhedge_jump"] = (
        jump["superhedge_n"] - jump["superhedge"] > 0.5
        and abs(jump["avar_n"] - jump["avar"]) <= 2.0 / (n * alpha)
    )

    p_eps, flat = unbounded_leverage(eps)
    bounded = optimal_avar_hedge(p_eps, zero, k, alpha).value
    sizes = [10.0**j for j in range(7)]
    levered = [
        avar(wealth_distribution(p_eps, Strategy.constant(p_eps, size, size), zero), alpha)
        for size in sizes
    ]
    items["unbounded_leverage"] = {
        "bounded_value": bounded,
        "flat_value": optimal_avar_hedge(flat, zero, k, alpha).value,
        "levered_min": min(levered),
        "formula_gap": max(abs(v - leverage_avar(eps, alpha, s)) for v, s in zip(levered, sizes)),
    }
    checks["unbounded_leverage"] = bool(
        math.isfinite(bounded)
        and levered[-1] < -threshold
        and items["unbounded_leverage"]["formula_gap"] <= 1e-9 * sizes[-1]
    )
    if eps >= alpha / 2:
        notes.append("eps >= alpha / 2: long positions do not push AVaR down")

    p_eps, p = hidden_sign(eps)
    aw2 = adapted_wasserstein_lp(p_eps, p, 2.0)
    held = sign_strategy(k).on_tree(p_eps)
    projected = project_strategy(held, aw2.coupling, p)
    law_eps = payoff_law(p_eps, held, zero)
    law_flat = payoff_law(p, projected, zero)
    items["hidden_sign"] = {
        "aw2": aw2.value,
        "aw2_error": abs(aw2.value - eps * math.sqrt(2.0)),
        "projected_max": float(np.max(np.abs(projected.positions))),
        "weak": weak_ot(law_flat, law_eps, 2).value,
        "plain_same_strategy": wasserstein(
            law_eps, payoff_law(p, sign_strategy(k).on_tree(p), zero), 2.0
        ).value,
    }
    checks["hidden_sign"] = (
        items["hidden_sign"]["aw2_error"] <= 1e-9 and items["hidden_sign"]["projected_max"] <= 1e-9
    )

    c, sigma = 1.0, 0.25
    up, down = sign_drift(c, sigma)
    items["sign_drift"] = {
        "synchronous": synchronous_value(up, down, 1.0).expected_cost,
        "flipped": math.sqrt(8.0 * sigma**2),
        "aw1": adapted_wasserstein_lp(up, down, 1.0).value,
    }
    drift = items["sign_drift"]
    checks["sign_drift"] = drift["aw1"] <= drift["flipped"] + 1e-9 < drift["synchronous"]

    return CounterexampleReport(
        parameters={"n": n, "eps": eps, "delta": delta, "k": k, "alpha": alpha, "cap": cap},
        items=items,
        checks=checks,
        notes=notes,
        passed=all(checks.values()),
    )


# ---------------------------------------------------------------------------
# Randomized verifier suites
# ---------------------------------------------------------------------------


def _verifier_instance(job: tuple[str, int, int, dict[str, Any]]) -> VerificationReport:
    check, seed, index, options = job
    rng = _rng(seed, index)
    horizon = int(options.get("horizon", 2))
    max_children = int(options.get("max_children", 3))
    k = float(options.get("k", 1.0))
    tree_p = random_tree(rng, horizon, max_children)
    if index % 2 == 0:
        tree_q = random_tree(rng, horizon, max_children)
    else:
        noise = float(options.get("noise", 0.1))
        tree_q = tree_p.map_values(lambda v: v + noise * float(rng.standard_normal()))
    claim = random_affine_claim(rng, horizon)
    prefix = random_prefix_strategy(rng, horizon, k)
    m = float(rng.normal())
    if check == "whi":
        return verify_whi(tree_p, tree_q, random_strategy(rng, tree_p, k), claim, m, k)
    if check == "shi":
        return verify_shi(tree_p, tree_q, prefix, claim, m, k)
    if check == "avar":
        alpha = float(options.get("alpha", 0.5))
        return verify_avar_lipschitz(tree_p, tree_q, claim, k, alpha, prefix)
    if check == "contraction":
        p = float(options.get("p", 1.0))
        return verify_contraction(
            tree_p, tree_q, random_strategy(rng, tree_p, k), claim, k, p, prefix
        )
    if check == "oce":
        slope = float(rng.uniform(1.0, 3.0))
        loss = piecewise_linear_loss([(0.0, 0.0), (slope, 0.0)], f"hinge({slope:.3g})")
        return verify_oce_stability(tree_p, tree_q, claim, k, loss)
    raise InvalidInputError(f"unknown check '{check}', expected one of {VERIFIER_CHECKS}")


def verifier_suite(
    check: str,
    instances: int = 100,
    seed: int = 0,
    workers: Optional[int] = None,
    **options: Any,
) -> list[VerificationReport]:
    """Run one verifier on `instances` random (P, Q, claim, strategy) draws."""
    if check not in VERIFIER_CHECKS:
        raise InvalidInputError(f"unknown check '{check}', expected one of {VERIFIER_CHECKS}")
    jobs = [(check, seed, i, dict(options)) for i in range(instances)]
    reports = map_ordered(_verifier_instance, jobs, workers)
    failed = sum(not r.passed for r in reports)
    logger.info(f"verifier_suite: {check} {instances - failed}/{instances} passed")
    return reports


def reports_frame(reports: Sequence[VerificationReport]) -> pd.DataFrame:
    """One row per report: check, lhs, rhs, slack, passed."""
    return pd.DataFrame(
        [
            {
                "instance": i,
                "check": r.check,
                "lhs": r.lhs,
                "rhs": r.rhs,
                "slack": r.slack,
                "passed": r.passed,
            }
            for i, r in enumerate(reports)
        ],
        columns=["instance", "check", "lhs", "rhs", "slack", "passed"],
    )

