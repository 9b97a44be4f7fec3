"""Stability checks for hedging under model perturbations.

Each verifier evaluates both sides of one inequality between a model P and
a perturbed model Q and returns a `VerificationReport`. Reports never
raise on a violated inequality; `passed` records the outcome.
"""

from __future__ import annotations

import math
from typing import Any, Optional

import numpy as np
from loguru import logger
from pydantic import ConfigDict, Field

from adapted_wasserstein.core.bicausal import adapted_wasserstein_lp, pair_cost
from adapted_wasserstein.core.constants import INV_SQRT_2PI, SLACK_TOL
from adapted_wasserstein.core.decompose import ConstantsLedger, distance_to_constant
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.hedging.projection import (
    project_strategy,
    projection_identity_gap,
)
from adapted_wasserstein.core.hedging.risk import avar, oce_risk, wealth_distribution
from adapted_wasserstein.core.hedging.solvers import optimal_avar_hedge, optimal_oce_hedge
from adapted_wasserstein.core.hedging.specs import (
    Claim,
    LossSpec,
    PrefixStrategy,
    Strategy,
    call_claim,
)
from adapted_wasserstein.core.lattice import random_walk_lattice, synchronous_cost
from adapted_wasserstein.core.scenario import (
    DiscreteDistribution,
    ScenarioTree,
    check_same_horizon,
    to_path_law,
)
from adapted_wasserstein.core.transport import wasserstein, weak_ot
from adapted_wasserstein.utils.serde import SerdeMixin


class VerificationReport(SerdeMixin):
    """Both sides of one checked inequality, lhs <= rhs, with what fed them.

    Attributes:
        check: Name of the inequality.
        slack: rhs - lhs; the check passes when slack >= -tolerance.
        constants: Ledger of every constant used on the right-hand side.
        terms: Named intermediate quantities (distances, base errors, values).
        strategy: Strategy the left-hand side was evaluated with, by node id.
        solver: Solver metadata (coupling method, projection identity gap).
    """

    model_config = ConfigDict(extra="forbid")

    check: str
    lhs: float
    rhs: float
    slack: float
    tolerance: float = SLACK_TOL
    passed: bool
    constants: ConstantsLedger
    terms: dict[str, float] = Field(default_factory=dict)
    strategy: dict[str, float] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)
    solver: dict[str, Any] = Field(default_factory=dict)


def _report(
    check: str,
    lhs: float,
    rhs: float,
    ledger: ConstantsLedger,
    tolerance: float,
    extra_ok: bool = True,
    **fields: Any,
) -> VerificationReport:
    slack = rhs - lhs
    passed = bool(slack >= -tolerance and extra_ok)
    if not passed:
        logger.warning(f"{check}: lhs {lhs:.10g} > rhs {rhs:.10g} (slack {slack:.3e})")
    return VerificationReport(
        check=check,
        lhs=float(lhs),
        rhs=float(rhs),
        slack=float(slack),
        tolerance=tolerance,
        passed=passed,
        constants=ledger,
        **fields,
    )


def _check_bound(strategy_k: float, k: float) -> None:
    if strategy_k > k + 1e-12:
        raise InvalidInputError(f"strategy bound {strategy_k} exceeds k = {k}")


def hedging_error(tree: ScenarioTree, strategy: Strategy, claim: Claim, m: float) -> float:
    """E[(C - m - (H.X)_T)^+]."""
    return wealth_distribution(tree, strategy, claim, m).expect(lambda z: np.maximum(z, 0.0))


def payoff_law(tree: ScenarioTree, strategy: Strategy, claim: Claim) -> DiscreteDistribution:
    """Law of C + (H.X)_T."""
    law = to_path_law(tree)
    return DiscreteDistribution.from_atoms(
        claim.evaluate(tree) + strategy.gains(), law.probs, normalize=True
    )


# ---------------------------------------------------------------------------
# Hedging inequalities
# ---------------------------------------------------------------------------


def verify_whi(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    strategy: Strategy,
    claim: Claim,
    m: float,
    k: float,
    tolerance: float = SLACK_TOL,
) -> VerificationReport:
    """E_Q[(C - m - G.Y)^+] <= E_P[(C - m - H.X)^+] + b_1 (k + L) AW_1(P, Q).

    G is H projected through an optimal AW_1 coupling.
    """
    check_same_horizon(tree_p, tree_q)
    _check_bound(strategy.k, k)
    claim.check_lipschitz([tree_p, tree_q])
    aw = adapted_wasserstein_lp(tree_p, tree_q, 1.0)
    projected = project_strategy(strategy, aw.coupling, tree_q)
    gap = projection_identity_gap(strategy, projected, aw.coupling)

    ledger = ConstantsLedger(p=1.0)
    factor = ledger.record("whi_factor", ledger.b_1 * (k + claim.lipschitz))
    base = hedging_error(tree_p, strategy, claim, m)
    lhs = hedging_error(tree_q, projected, claim, m)
    return _report(
        "whi",
        lhs,
        base + factor * aw.value,
        ledger,
        tolerance,
        terms={"base_error": base, "aw1": aw.value, "penalty": factor * aw.value},
        strategy=projected.to_mapping(),
        solver={"coupling": "bicausal_lp", "projection_identity_gap": gap},
    )


def verify_shi(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    strategy: PrefixStrategy,
    claim: Claim,
    m: float,
    k: float,
    tolerance: float = SLACK_TOL,
) -> VerificationReport:
    """The same H on both models, at the price of beta * AW_2(P, Q).

    Raises:
        InvalidInputError: H is not certifiably prefix-Lipschitz.
    """
    check_same_horizon(tree_p, tree_q)
    _check_bound(strategy.k, k)
    claim.check_lipschitz([tree_p, tree_q])
    lip_tilde = strategy.certify([tree_p, tree_q])
    aw1 = adapted_wasserstein_lp(tree_p, tree_q, 1.0).value
    aw2 = adapted_wasserstein_lp(tree_p, tree_q, 2.0).value

    ledger = ConstantsLedger(p=1.0)
    ledger.record("lipschitz_tilde", lip_tilde)
    factor = ledger.record("whi_factor", ledger.b_1 * (k + claim.lipschitz))
    to_zero_p = distance_to_constant(tree_p, 2.0)
    to_zero_q = distance_to_constant(tree_q, 2.0)
    beta = ledger.beta(lip_tilde, to_zero_p, to_zero_q)

    h_p, h_q = strategy.on_tree(tree_p), strategy.on_tree(tree_q)
    base = hedging_error(tree_p, h_p, claim, m)
    lhs = hedging_error(tree_q, h_q, claim, m)
    return _report(
        "shi",
        lhs,
        base + factor * aw1 + beta * aw2,
        ledger,
        tolerance,
        terms={
            "base_error": base,
            "aw1": aw1,
            "aw2": aw2,
            "aw2_p_to_zero": to_zero_p,
            "aw2_q_to_zero": to_zero_q,
        },
        strategy=h_q.to_mapping(),
        solver={"coupling": "bicausal_lp", "strategy": strategy.name},
    )


# ---------------------------------------------------------------------------
# Risk measure stability
# ---------------------------------------------------------------------------


def verify_avar_lipschitz(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    claim: Claim,
    k: float,
    alpha: float,
    strategy: Optional[PrefixStrategy] = None,
    tolerance: float = SLACK_TOL,
) -> VerificationReport:
    """|inf_H AVaR^P - inf_H AVaR^Q| <= b_1 (L + k) / alpha * AW_1(P, Q).

    With a prefix-Lipschitz `strategy`, also checks the fixed-strategy
    variant |AVaR^P(C - H.X) - AVaR^Q(C - H.Y)| <= r AW_1 + beta / alpha AW_2.
    """
    check_same_horizon(tree_p, tree_q)
    claim.check_lipschitz([tree_p, tree_q])
    value_p = optimal_avar_hedge(tree_p, claim, k, alpha).value
    value_q = optimal_avar_hedge(tree_q, claim, k, alpha).value
    aw1 = adapted_wasserstein_lp(tree_p, tree_q, 1.0).value

    ledger = ConstantsLedger(p=1.0)
    r = ledger.r(claim.lipschitz, k, alpha)
    terms = {"value_p": value_p, "value_q": value_q, "aw1": aw1}
    extra_ok = True
    notes = []
    if strategy is not None:
        _check_bound(strategy.k, k)
        lip_tilde = strategy.certify([tree_p, tree_q])
        ledger.record("lipschitz_tilde", lip_tilde)
        aw2 = adapted_wasserstein_lp(tree_p, tree_q, 2.0).value
        beta = ledger.beta(
            lip_tilde, distance_to_constant(tree_p, 2.0), distance_to_constant(tree_q, 2.0)
        )
        fixed_p = avar(wealth_distribution(tree_p, strategy.on_tree(tree_p), claim), alpha)
        fixed_q = avar(wealth_distribution(tree_q, strategy.on_tree(tree_q), claim), alpha)
        fixed_lhs = abs(fixed_p - fixed_q)
        fixed_rhs = r * aw1 + beta / alpha * aw2
        extra_ok = fixed_rhs - fixed_lhs >= -tolerance
        terms.update(
            aw2=aw2,
            fixed_value_p=fixed_p,
            fixed_value_q=fixed_q,
            fixed_lhs=fixed_lhs,
            fixed_rhs=fixed_rhs,
            fixed_slack=fixed_rhs - fixed_lhs,
        )
        notes.append(f"fixed-strategy variant with '{strategy.name}'")
    return _report(
        "avar_lipschitz",
        abs(value_p - value_q),
        r * aw1,
        ledger,
        tolerance,
        extra_ok=extra_ok,
        terms=terms,
        notes=notes,
        solver={"hedge": "lp", "coupling": "bicausal_lp"},
    )


def verify_oce_stability(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    claim: Claim,
    k: float,
    loss: LossSpec,
    tolerance: float = SLACK_TOL,
) -> VerificationReport:
    """|inf_H rho^P - inf_H rho^Q| <= max_slope(l) b_1 (L + k) AW_1(P, Q)."""
    check_same_horizon(tree_p, tree_q)
    claim.check_lipschitz([tree_p, tree_q])
    value_p = optimal_oce_hedge(tree_p, claim, k, loss).value
    value_q = optimal_oce_hedge(tree_q, claim, k, loss).value
    aw1 = adapted_wasserstein_lp(tree_p, tree_q, 1.0).value
    ledger = ConstantsLedger(p=1.0)
    lip = ledger.record("oce_lipschitz", loss.max_slope * ledger.b_1 * (claim.lipschitz + k))
    unhedged = oce_risk(wealth_distribution(tree_p, None, claim), loss)
    return _report(
        "oce_stability",
        abs(value_p - value_q),
        lip * aw1,
        ledger,
        tolerance,
        terms={"value_p": value_p, "value_q": value_q, "aw1": aw1, "unhedged_p": unhedged},
        solver={"hedge": "lp", "loss": loss.name},
    )


# ---------------------------------------------------------------------------
# Contraction of payoff laws
# ---------------------------------------------------------------------------


def verify_contraction(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    strategy: Strategy,
    claim: Claim,
    k: float,
    p: float = 1.0,
    lipschitz_strategy: Optional[PrefixStrategy] = None,
    tolerance: float = SLACK_TOL,
) -> VerificationReport:
    """d_p^w(law_Q(C + G.Y), law_P(C + H.X)) <= 2^{(p-1)/p} b_p^{1/p} (k + L) E_pi[c_p]^{1/p}.

    pi is an optimal AW_p coupling and G the projection of H through it.
    With `lipschitz_strategy`, the plain d_p between the laws of the same
    strategy on both models is checked against the bound with the extra
    alpha term.
    """
    check_same_horizon(tree_p, tree_q)
    if p not in (1, 2):
        raise InvalidInputError(f"contraction check supports p in {{1, 2}}, got {p}")
    _check_bound(strategy.k, k)
    claim.check_lipschitz([tree_p, tree_q])
    aw = adapted_wasserstein_lp(tree_p, tree_q, p)
    projected = project_strategy(strategy, aw.coupling, tree_q)
    law_q = payoff_law(tree_q, projected, claim)
    law_p = payoff_law(tree_p, strategy, claim)
    weak = weak_ot(law_q, law_p, p).value

    ledger = ConstantsLedger(p=float(p))
    rhs = ledger.contraction(k, claim.lipschitz) * aw.expected_cost ** (1.0 / p)
    terms = {"aw": aw.value, "expected_cost": aw.expected_cost, "weak": weak}
    extra_ok = True
    notes = []
    if lipschitz_strategy is not None:
        _check_bound(lipschitz_strategy.k, k)
        lip_tilde = lipschitz_strategy.certify([tree_p, tree_q])
        ledger.record("lipschitz_tilde", lip_tilde)
        alpha = ledger.integral_alpha(
            lip_tilde,
            distance_to_constant(tree_p, 2.0 * p),
            distance_to_constant(tree_q, 2.0 * p),
        )
        cost_2p = aw.coupling.expect(pair_cost(tree_p, tree_q, 2.0 * p))
        plain = wasserstein(
            payoff_law(tree_q, lipschitz_strategy.on_tree(tree_q), claim),
            payoff_law(tree_p, lipschitz_strategy.on_tree(tree_p), claim),
            p,
        ).value
        plain_rhs = (
            2.0 ** ((3 * p - 3) / p)
            * ledger.b_p ** (1.0 / p)
            * (k + claim.lipschitz)
            * aw.expected_cost ** (1.0 / p)
            + alpha ** (1.0 / p) * max(cost_2p, 0.0) ** (1.0 / (2.0 * p))
        )
        extra_ok = plain_rhs - plain >= -tolerance
        terms.update(plain=plain, plain_rhs=plain_rhs, plain_slack=plain_rhs - plain)
        notes.append(f"plain-distance variant with '{lipschitz_strategy.name}'")
    return _report(
        "contraction",
        weak,
        rhs,
        ledger,
        tolerance,
        extra_ok=extra_ok,
        terms=terms,
        strategy=projected.to_mapping(),
        notes=notes,
        solver={
            "coupling": "bicausal_lp",
            "weak": "lp" if p == 1 else "frank_wolfe",
            "projection_identity_gap": projection_identity_gap(strategy, projected, aw.coupling),
        },
    )


# ---------------------------------------------------------------------------
# Call hedging on Brownian lattices
# ---------------------------------------------------------------------------


def call_tightness(
    sigma: float,
    sigma_hat: float,
    steps: int,
    k: float = 1.0,
    alpha: float = 0.3,
    horizon: float = 1.0,
    value_rtol: float = 0.05,
    ratio_rtol: float = 0.1,
) -> VerificationReport:
    """Optimal AVaR hedges of the at-the-money call on two scaled walks.

    Checks the Lipschitz bound, that each value is near sigma sqrt(T) / sqrt(2 pi)
    and that |value difference| / AW_1 is near 1 / sqrt(2 pi).
    """
    claim = call_claim(0.0)
    model_p = random_walk_lattice(steps, sigma, horizon=horizon)
    model_q = random_walk_lattice(steps, sigma_hat, horizon=horizon)
    value_p = optimal_avar_hedge(model_p, claim, k, alpha).value
    value_q = optimal_avar_hedge(model_q, claim, k, alpha).value
    aw1 = synchronous_cost(model_p, model_q, 1.0).value

    ledger = ConstantsLedger(p=1.0)
    r = ledger.r(claim.lipschitz, k, alpha)
    ref_p = sigma * math.sqrt(horizon) * INV_SQRT_2PI
    ref_q = sigma_hat * math.sqrt(horizon) * INV_SQRT_2PI
    diff = abs(value_p - value_q)
    ratio = diff / aw1 if aw1 > 0 else float("nan")
    notes = []
    values_ok = all(
        abs(v - ref) <= value_rtol * ref for v, ref in ((value_p, ref_p), (value_q, ref_q))
    )
    ratio_ok = bool(np.isfinite(ratio) and abs(ratio - INV_SQRT_2PI) <= ratio_rtol * INV_SQRT_2PI)
    if not values_ok:
        notes.append("hedge value off the sigma / sqrt(2 pi) reference")
    if not ratio_ok:
        notes.append("difference ratio off 1 / sqrt(2 pi)")
    return _report(
        "call_tightness",
        diff,
        r * aw1,
        ledger,
        SLACK_TOL,
        extra_ok=values_ok and ratio_ok,
        terms={
            "value_p": value_p,
            "value_q": value_q,
            "reference_p": ref_p,
            "reference_q": ref_q,
            "aw1": aw1,
            "ratio": ratio,
            "reference_ratio": INV_SQRT_2PI,
            "distance_T": horizon * abs(sigma - sigma_hat),
            "distance_sqrt_T": math.sqrt(horizon) * abs(sigma - sigma_hat),
        },
        notes=notes,
        solver={"hedge": "replication_or_lp", "coupling": "synchronous_lattice", "steps": steps},
    )
