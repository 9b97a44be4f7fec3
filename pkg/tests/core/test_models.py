"""Tests for the model zoo."""

import math

import numpy as np
import pytest

from adapted_wasserstein.core.bicausal import adapted_wasserstein_lp
from adapted_wasserstein.core.decompose import doob_decompose, seminorm
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.hedging.specs import linear_capped
from adapted_wasserstein.core.models import (
    VolatilitySchedule,
    counterexample_suite,
    drift_diffusion_tree,
    gbm_target,
    gbm_tree,
    leverage_avar,
    random_tree,
    random_walk_tree,
    scaling_formula,
    sign_drift,
    sign_gap_limit,
    superhedge_jump,
    two_drift,
    unbounded_leverage,
)
from adapted_wasserstein.core.scenario import terminal_law, validate


@pytest.mark.unit
def test_schedule_from_steps() -> None:
    """Step schedules return their entries; mismatched drifts are refused."""
    schedule = VolatilitySchedule.from_steps([0.5, 1.5], [0.0, 1.0])
    assert schedule.coefficients(1, 0.0) == (1.5, 1.0)
    with pytest.raises(InvalidInputError):
        VolatilitySchedule.from_steps([1.0, 1.0], [0.0])


@pytest.mark.unit
def test_negative_volatility_is_refused() -> None:
    """sigma(n, x) < 0 fails while the tree is built."""
    schedule = VolatilitySchedule(sigma=lambda n, x: -1.0)
    with pytest.raises(InvalidInputError, match="sigma"):
        random_walk_tree(2, schedule)


@pytest.mark.unit
def test_quantized_walk_matches_the_scaling_formula() -> None:
    """Walks with (0.5, 1.5) and (1, 1) are 0.5 apart in AW_2."""
    a = random_walk_tree(2, VolatilitySchedule.from_steps([0.5, 1.5]))
    b = random_walk_tree(2, VolatilitySchedule.from_steps([1.0, 1.0]))
    assert scaling_formula([0.5, 1.5], [1.0, 1.0]) == pytest.approx(0.5)
    assert adapted_wasserstein_lp(a, b, 2.0).value == pytest.approx(0.5, abs=1e-8)


@pytest.mark.unit
def test_gauss_hermite_walk_moments() -> None:
    """Quadrature steps keep the mean and match the variance sigma^2 T."""
    tree = random_walk_tree(2, VolatilitySchedule.constant(0.4), "gauss-hermite", points=3, horizon=2.0)
    law = terminal_law(tree)
    assert validate(tree) == []
    assert law.mean() == pytest.approx(0.0, abs=1e-12)
    assert law.expect(lambda x: x**2) == pytest.approx(0.32, abs=1e-12)
    assert doob_decompose(tree).is_martingale()


@pytest.mark.unit
def test_gauss_hermite_needs_two_points() -> None:
    """A single quadrature node is refused."""
    with pytest.raises(InvalidInputError):
        random_walk_tree(1, VolatilitySchedule.constant(1.0), "gauss-hermite", points=1)


@pytest.mark.unit
def test_pure_drift_is_deterministic() -> None:
    """With sigma = 0 the seminorm is the total drift T |mu|."""
    tree = drift_diffusion_tree(3, VolatilitySchedule.constant(0.0, 0.6), horizon=2.0)
    assert seminorm(tree, 1.0) == pytest.approx(1.2)
    assert seminorm(tree, 2.0) == pytest.approx(1.2)


@pytest.mark.unit
def test_two_drift_pair() -> None:
    """Equal volatility, drifts 0 and 1 over [0, 1]: AW_1 = 1."""
    a, b = two_drift(4, 0.0, 1.0)
    assert adapted_wasserstein_lp(a, b, 1.0).value == pytest.approx(1.0, abs=1e-8)


@pytest.mark.unit
def test_gbm_target_value() -> None:
    """sigma 0.2 against 0.3 over one unit of time gives 0.011312."""
    assert gbm_target(0.2, 0.3) == pytest.approx(0.011312, abs=5e-7)
    assert gbm_target(0.2, 0.2) == 0.0


@pytest.mark.unit
def test_gbm_tree_is_a_positive_martingale() -> None:
    """The expanded GBM tree starts at one and never leaves the positive axis."""
    tree = gbm_tree(5, 0.3)
    assert tree.root.value == 1.0
    assert np.all(tree.values > 0.0)
    assert doob_decompose(tree).is_martingale()


@pytest.mark.unit
def test_counterexample_suite_is_valid() -> None:
    """Every named pair is a pair of valid trees on a common horizon."""
    suite = counterexample_suite(n=10, eps=0.05, delta=0.2)
    assert set(suite) == {
        "information_split",
        "sign_arbitrage",
        "superhedge_jump",
        "unbounded_leverage",
        "hidden_sign",
        "two_drift",
        "sign_drift",
    }
    for first, second in suite.values():
        assert validate(first) == [] and validate(second) == []
        assert first.horizon == second.horizon


@pytest.mark.unit
def test_superhedge_jump_masses() -> None:
    """P_n puts mass 1/n at zero."""
    p_n, _ = superhedge_jump(4)
    assert terminal_law(p_n).atoms == [(-1.0, 0.375), (0.0, 0.25), (1.0, 0.375)]
    with pytest.raises(InvalidInputError):
        superhedge_jump(1)


@pytest.mark.unit
def test_unbounded_leverage_constants() -> None:
    """The long position's AVaR formula and the eps range."""
    assert leverage_avar(0.01, 0.5, 1.0) == pytest.approx(-0.0096)
    with pytest.raises(InvalidInputError):
        unbounded_leverage(1.5)


@pytest.mark.unit
def test_sign_gap_limit() -> None:
    """Half the capped utility of k = 1."""
    assert sign_gap_limit(linear_capped(5.0).u, 1.0) == pytest.approx(0.5)


@pytest.mark.unit
def test_sign_drift_drifts() -> None:
    """The second step drifts with the sign of the first move, oppositely in the pair."""
    up, down = sign_drift(c=2.0, sigma=0.5)
    dec_up, dec_down = doob_decompose(up), doob_decompose(down)
    first = up.index["r.1"]
    assert up.values[first] == 0.5
    assert dec_up.drift[first] == pytest.approx(2.0)
    assert dec_down.drift[down.index["r.1"]] == pytest.approx(-2.0)


@pytest.mark.unit
def test_random_martingale_trees(rng: np.random.Generator) -> None:
    """The martingale flag recentres every node's moves."""
    for _ in range(5):
        assert doob_decompose(random_tree(rng, 3, 3, martingale=True)).is_martingale(1e-10)


@pytest.mark.unit
def test_random_tree_rejects_empty_branching(rng: np.random.Generator) -> None:
    """At least one child per node."""
    with pytest.raises(InvalidInputError):
        random_tree(rng, 2, 0)


@pytest.mark.unit
def test_drift_tree_increment_size() -> None:
    """Euler steps are mu dt +- sigma sqrt(dt)."""
    tree = drift_diffusion_tree(4, VolatilitySchedule.constant(1.0, 2.0))
    child = tree.nodes[tree.nodes[0].children[1]]
    assert child.value == pytest.approx(0.5 + math.sqrt(0.25))
