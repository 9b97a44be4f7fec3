"""Tests for the stability verifiers."""

import json

import numpy as np
import pytest

from adapted_wasserstein.core.constants import INV_SQRT_2PI
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.hedging.specs import (
    Strategy,
    avar_loss,
    call_claim,
    exponential_loss,
    positive_part,
    sign_strategy,
)
from adapted_wasserstein.core.hedging.verify import (
    VerificationReport,
    call_tightness,
    hedging_error,
    verify_avar_lipschitz,
    verify_contraction,
    verify_oce_stability,
    verify_shi,
    verify_whi,
)
from adapted_wasserstein.core.models import (
    hidden_sign,
    random_affine_claim,
    random_prefix_strategy,
    random_strategy,
    random_tree,
)
from adapted_wasserstein.core.scenario import ScenarioTree


def _pairs(rng: np.random.Generator, count: int) -> list[tuple[ScenarioTree, ScenarioTree]]:
    return [(random_tree(rng, 2, 2), random_tree(rng, 2, 2)) for _ in range(count)]


@pytest.mark.unit
def test_hedging_error(step_tree: ScenarioTree) -> None:
    """The replicating half unit leaves no shortfall."""
    claim = call_claim(0.0)
    assert hedging_error(step_tree, Strategy.constant(step_tree, 1.0, 0.5), claim, 0.5) == pytest.approx(0.0)
    assert hedging_error(step_tree, Strategy.zero(step_tree, 1.0), claim, 0.0) == pytest.approx(0.5)


@pytest.mark.unit
def test_whi_holds_on_random_trees(rng: np.random.Generator) -> None:
    for tree_p, tree_q in _pairs(rng, 5):
        claim = random_affine_claim(rng, 2)
        report = verify_whi(tree_p, tree_q, random_strategy(rng, tree_p, 1.0), claim, 0.0, 1.0)
        assert report.passed, report.slack
        assert report.solver["projection_identity_gap"] <= 1e-7
        assert set(report.strategy) == {tree_q.node_id(u) for u in tree_q.internal_nodes}


@pytest.mark.unit
def test_whi_refuses_oversized_strategies(step_tree: ScenarioTree) -> None:
    strategy = Strategy.constant(step_tree, 2.0, 2.0)
    with pytest.raises(InvalidInputError, match="exceeds"):
        verify_whi(step_tree, step_tree, strategy, call_claim(0.0), 0.0, 1.0)


@pytest.mark.unit
def test_shi_holds_for_lipschitz_strategies(rng: np.random.Generator) -> None:
    for tree_p, tree_q in _pairs(rng, 5):
        claim = random_affine_claim(rng, 2)
        strategy = random_prefix_strategy(rng, 2, 1.0)
        report = verify_shi(tree_p, tree_q, strategy, claim, 0.0, 1.0)
        assert report.passed, report.slack
        assert "beta" in report.constants.derived


@pytest.mark.unit
def test_shi_pays_for_the_sign_strategy() -> None:
    """The sign strategy's constant k / eps makes the bound large but valid."""
    p_eps, p = hidden_sign(0.01)
    report = verify_shi(p_eps, p, sign_strategy(1.0), call_claim(0.0), 0.0, 1.0)
    assert report.passed
    assert report.constants.derived["lipschitz_tilde"] == pytest.approx(100.0)


@pytest.mark.unit
def test_avar_lipschitz(rng: np.random.Generator) -> None:
    """Optimal values and the fixed-strategy variant both satisfy their bounds."""
    for tree_p, tree_q in _pairs(rng, 4):
        claim = random_affine_claim(rng, 2)
        strategy = random_prefix_strategy(rng, 2, 1.0)
        report = verify_avar_lipschitz(tree_p, tree_q, claim, 1.0, 0.3, strategy)
        assert report.passed, report.terms
        assert report.terms["fixed_slack"] >= -report.tolerance
        assert report.constants.derived["r"] == pytest.approx(6.0 * (claim.lipschitz + 1.0) / 0.3)


@pytest.mark.unit
def test_oce_stability(rng: np.random.Generator) -> None:
    for tree_p, tree_q in _pairs(rng, 4):
        claim = random_affine_claim(rng, 2)
        for loss in (positive_part(), avar_loss(0.5)):
            assert verify_oce_stability(tree_p, tree_q, claim, 1.0, loss).passed


@pytest.mark.unit
def test_oce_stability_needs_a_slope_bound(step_tree: ScenarioTree) -> None:
    with pytest.raises(InvalidInputError, match="not piecewise linear"):
        verify_oce_stability(step_tree, step_tree, call_claim(0.0), 1.0, exponential_loss())


@pytest.mark.unit
@pytest.mark.parametrize("p", [1.0, 2.0])
def test_contraction(p: float, rng: np.random.Generator) -> None:
    """Weak transport between payoff laws stays below the coupling cost bound."""
    for tree_p, tree_q in _pairs(rng, 3):
        claim = random_affine_claim(rng, 2)
        report = verify_contraction(
            tree_p,
            tree_q,
            random_strategy(rng, tree_p, 1.0),
            claim,
            1.0,
            p,
            lipschitz_strategy=random_prefix_strategy(rng, 2, 1.0),
        )
        assert report.passed, report.terms
        assert report.terms["plain_slack"] >= -report.tolerance


@pytest.mark.unit
def test_contraction_supports_p_one_and_two(step_tree: ScenarioTree) -> None:
    with pytest.raises(InvalidInputError, match="supports p"):
        verify_contraction(step_tree, step_tree, Strategy.zero(step_tree), call_claim(0.0), 0.0, 3.0)


@pytest.mark.unit
def test_call_tightness() -> None:
    """Values near sigma / sqrt(2 pi), difference ratio near 1 / sqrt(2 pi)."""
    report = call_tightness(0.2, 0.3, 100)
    assert report.passed, report.notes
    assert report.terms["aw1"] == pytest.approx(0.1, abs=1e-9)
    assert report.terms["ratio"] == pytest.approx(INV_SQRT_2PI, rel=0.02)


@pytest.mark.unit
def test_report_serializes(step_tree: ScenarioTree) -> None:
    """Reports dump the constants ledger with the terms."""
    report = verify_whi(step_tree, step_tree, Strategy.zero(step_tree, 1.0), call_claim(0.0), 0.0, 1.0)
    data = json.loads(report.to_json())
    assert data["constants"]["b_1"] == 6.0
    assert data["terms"]["aw1"] == pytest.approx(0.0, abs=1e-9)
    assert VerificationReport.model_validate(data).passed
