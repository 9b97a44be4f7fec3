"""Tests for the hedging optimizers."""

import numpy as np
import pytest

from adapted_wasserstein.core.constants import INV_SQRT_2PI
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.hedging.solvers import (
    expected_loss_hedge,
    increment_matrix,
    indifference_price,
    optimal_avar_hedge,
    optimal_oce_hedge,
    price_range,
    superhedge_price,
    utility_maximize,
    utility_objective,
)
from adapted_wasserstein.core.hedging.specs import (
    Claim,
    UtilitySpec,
    avar_loss,
    call_claim,
    capped_exponential,
    constant_claim,
    exponential_loss,
    linear_capped,
    linear_utility,
    tent_claim,
)
from adapted_wasserstein.core.lattice import random_walk_lattice
from adapted_wasserstein.core.models import random_affine_claim, random_tree, superhedge_jump
from adapted_wasserstein.core.scenario import ScenarioTree, terminal_law, to_path_law
from tests.helpers import binomial_walk


def _grid_supremum(
    tree: ScenarioTree, claim: Claim, utility: UtilitySpec, k: float, points: int = 11, rounds: int = 40
) -> float:
    """Zooming grid search for sup E[U(C + D h)] over the box [-k, k]^d."""
    D = increment_matrix(tree)
    probs = to_path_law(tree).probs
    payoff = claim.evaluate(tree)
    centre = np.zeros(D.shape[1])
    half = k
    best = -np.inf
    for _ in range(rounds):
        axes = [np.linspace(max(c - half, -k), min(c + half, k), points) for c in centre]
        grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
        values = utility.u(payoff[:, None] + D @ grid.T).T @ probs
        i = int(np.argmax(values))
        if values[i] >= best:
            best, centre = float(values[i]), grid[i]
        half *= 0.5
    return best


@pytest.mark.unit
def test_increment_matrix(step_tree: ScenarioTree, two_step_tree: ScenarioTree) -> None:
    """One column per non-terminal node, one row per path."""
    np.testing.assert_allclose(increment_matrix(step_tree), [[-1.0], [1.0]])
    D = increment_matrix(two_step_tree)
    assert D.shape == (4, 3)
    np.testing.assert_allclose(np.count_nonzero(D, axis=1), 2)


@pytest.mark.unit
def test_avar_hedge_of_constant_claims(two_step_tree: ScenarioTree) -> None:
    """On a martingale no strategy lowers AVaR below E[C]; constants cost themselves."""
    assert optimal_avar_hedge(two_step_tree, constant_claim(0.0), 1.0, 0.5).value == pytest.approx(
        0.0, abs=1e-10
    )
    assert optimal_avar_hedge(two_step_tree, constant_claim(1.5), 1.0, 0.1).value == pytest.approx(
        1.5, abs=1e-10
    )


@pytest.mark.unit
def test_avar_hedge_of_a_call(step_tree: ScenarioTree) -> None:
    """Half a unit replicates the call; without trading the tail is the whole payoff."""
    hedged = optimal_avar_hedge(step_tree, call_claim(0.0), 1.0, 0.5)
    assert hedged.value == pytest.approx(0.5, abs=1e-10)
    assert hedged.strategy.to_mapping()["r"] == pytest.approx(0.5, abs=1e-10)
    assert optimal_avar_hedge(step_tree, call_claim(0.0), 0.0, 0.5).value == pytest.approx(1.0)


@pytest.mark.unit
def test_avar_hedge_is_non_increasing_in_the_bound(rng: np.random.Generator) -> None:
    """A larger position bound never raises the optimal AVaR."""
    for _ in range(5):
        tree = random_tree(rng, 2, 3)
        claim = random_affine_claim(rng, 2)
        values = [optimal_avar_hedge(tree, claim, k, 0.3).value for k in np.linspace(0.0, 2.0, 9)]
        assert np.all(np.diff(values) <= 1e-9)


@pytest.mark.unit
def test_lattice_replication_matches_the_tree() -> None:
    """Admissible deltas give the replication price, which the tree LP reproduces."""
    lattice = random_walk_lattice(4, 0.5)
    on_lattice = optimal_avar_hedge(lattice, call_claim(0.0), 1.0, 0.3)
    on_tree = optimal_avar_hedge(lattice.to_tree(), call_claim(0.0), 1.0, 0.3)
    assert on_lattice.method == "replication"
    assert on_lattice.value == pytest.approx(on_tree.value, abs=1e-9)


@pytest.mark.unit
def test_lattice_falls_back_to_the_tree() -> None:
    """A bound below the replicating delta needs the LP on the expanded tree."""
    res = optimal_avar_hedge(random_walk_lattice(4, 0.5), call_claim(0.0), 0.1, 0.3)
    assert res.method == "lp"


@pytest.mark.unit
def test_call_value_on_a_long_walk() -> None:
    """With 100 steps the value is within 5% of sigma / sqrt(2 pi)."""
    res = optimal_avar_hedge(random_walk_lattice(100, 1.0), call_claim(0.0), 1.0, 0.3)
    assert res.value == pytest.approx(INV_SQRT_2PI, rel=0.05)


@pytest.mark.unit
def test_superhedge_prices(step_tree: ScenarioTree) -> None:
    """Trading halves the call's superhedging price on the coin."""
    assert superhedge_price(step_tree, call_claim(0.0), 1.0).value == pytest.approx(0.5)
    assert superhedge_price(step_tree, call_claim(0.0), 0.0).value == pytest.approx(1.0)


@pytest.mark.unit
def test_superhedge_price_jumps() -> None:
    """A small atom at 0 moves the tent's price from 0 to 1."""
    p_n, p = superhedge_jump(50)
    claim = tent_claim(0.0, 1.0)
    assert superhedge_price(p_n, claim, 1.0).value == pytest.approx(1.0, abs=1e-10)
    assert superhedge_price(p, claim, 1.0).value == pytest.approx(0.0, abs=1e-10)


@pytest.mark.unit
def test_expected_loss_without_trading(two_step_tree: ScenarioTree) -> None:
    """k = 0 leaves E[(C - m)^+]."""
    res = expected_loss_hedge(two_step_tree, call_claim(0.0), 0.0, 0.5)
    expected = terminal_law(two_step_tree).expect(lambda x: np.maximum(np.maximum(x, 0.0) - 0.5, 0.0))
    assert res.value == pytest.approx(expected)


@pytest.mark.unit
def test_cutting_plane_matches_lp(rng: np.random.Generator) -> None:
    """Both methods find the same positive-part optimum."""
    for _ in range(5):
        tree = random_tree(rng, 2, 3)
        claim = random_affine_claim(rng, 2)
        lp = expected_loss_hedge(tree, claim, 1.0, 0.0, method="lp")
        cut = expected_loss_hedge(tree, claim, 1.0, 0.0, method="cutting_plane")
        assert cut.value == pytest.approx(lp.value, abs=1e-6)


@pytest.mark.unit
def test_expected_loss_methods(step_tree: ScenarioTree) -> None:
    with pytest.raises(InvalidInputError, match="not piecewise linear"):
        expected_loss_hedge(step_tree, call_claim(0.0), 1.0, 0.0, exponential_loss(), method="lp")
    with pytest.raises(InvalidInputError, match="unknown method"):
        expected_loss_hedge(step_tree, call_claim(0.0), 1.0, 0.0, method="newton")
    res = expected_loss_hedge(step_tree, call_claim(0.0), 1.0, 0.0, exponential_loss())
    assert res.method == "cutting_plane"


@pytest.mark.unit
def test_oce_with_the_avar_loss_is_the_avar_hedge(rng: np.random.Generator) -> None:
    for _ in range(5):
        tree = random_tree(rng, 2, 3)
        claim = random_affine_claim(rng, 2)
        oce = optimal_oce_hedge(tree, claim, 1.0, avar_loss(0.4)).value
        assert oce == pytest.approx(optimal_avar_hedge(tree, claim, 1.0, 0.4).value, abs=1e-8)


@pytest.mark.unit
def test_utility_gradient_matches_finite_differences(rng: np.random.Generator) -> None:
    """Directional derivatives agree with central differences to 1e-5."""
    utility = capped_exponential(1.0, -20.0)
    for _ in range(20):
        tree = random_tree(rng, 2, 3)
        claim = random_affine_claim(rng, 2)
        d = len(tree.internal_nodes)
        h = rng.uniform(-1.0, 1.0, size=d)
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        _, grad = utility_objective(tree, claim, utility, h)
        eps = 1e-6
        up, _ = utility_objective(tree, claim, utility, h + eps * v)
        down, _ = utility_objective(tree, claim, utility, h - eps * v)
        numeric = (up - down) / (2.0 * eps)
        assert abs(numeric - grad @ v) <= 1e-5 * max(1.0, abs(numeric))


@pytest.mark.unit
def test_linear_utility_on_a_martingale(two_step_tree: ScenarioTree) -> None:
    """Trading has zero expected gain, so the value is E[C]."""
    res = utility_maximize(two_step_tree, call_claim(0.0), 1.0, linear_utility())
    assert res.value == pytest.approx(0.5)


@pytest.mark.unit
def test_utility_maximum_beats_random_strategies(
    drift_tree: ScenarioTree, rng: np.random.Generator
) -> None:
    utility = capped_exponential(1.0, -5.0)
    claim = call_claim(0.0)
    best = utility_maximize(drift_tree, claim, 1.0, utility)
    for _ in range(20):
        h = rng.uniform(-1.0, 1.0, size=len(drift_tree.internal_nodes))
        assert utility_objective(drift_tree, claim, utility, h)[0] <= best.value + 1e-6


@pytest.mark.unit
def test_capped_utility_is_solved_exactly(rng: np.random.Generator) -> None:
    """The LP for min(x, cap) agrees with the cutting plane and beats brute force."""
    utility = linear_capped(0.5)
    for _ in range(10):
        tree = random_tree(rng, 2, 2)
        claim = random_affine_claim(rng, 2)
        lp = utility_maximize(tree, claim, 1.0, utility)
        assert lp.method == "lp"
        cut = utility_maximize(tree, claim, 1.0, utility, method="cutting_plane")
        assert cut.value == pytest.approx(lp.value, abs=1e-6)
        assert lp.value >= _grid_supremum(tree, claim, utility, 1.0) - 1e-9
        attained, _ = utility_objective(tree, claim, utility, lp.strategy.vector())
        assert attained == pytest.approx(lp.value, abs=1e-9)


@pytest.mark.unit
def test_smooth_utility_against_grid_search(rng: np.random.Generator) -> None:
    utility = capped_exponential(1.0, -5.0)
    for _ in range(10):
        tree = random_tree(rng, 2, 2)
        claim = random_affine_claim(rng, 2)
        res = utility_maximize(tree, claim, 1.0, utility)
        assert res.method == "cutting_plane"
        assert res.value >= _grid_supremum(tree, claim, utility, 1.0) - 1e-6
        attained, _ = utility_objective(tree, claim, utility, res.strategy.vector())
        assert attained == pytest.approx(res.value, abs=1e-12)


@pytest.mark.unit
def test_utility_objective_is_concave_on_segments(rng: np.random.Generator) -> None:
    """Midpoint values dominate the chord to 1e-10."""
    for utility in (capped_exponential(1.0, -5.0), linear_capped(0.5)):
        for _ in range(50):
            tree = random_tree(rng, 2, 3)
            claim = random_affine_claim(rng, 2)
            d = len(tree.internal_nodes)
            a, b = rng.uniform(-1.0, 1.0, size=(2, d))
            mid, _ = utility_objective(tree, claim, utility, 0.5 * (a + b))
            left, _ = utility_objective(tree, claim, utility, a)
            right, _ = utility_objective(tree, claim, utility, b)
            assert mid >= 0.5 * (left + right) - 1e-10


@pytest.mark.unit
def test_utility_maximize_methods(step_tree: ScenarioTree) -> None:
    with pytest.raises(InvalidInputError, match="not piecewise linear"):
        utility_maximize(step_tree, call_claim(0.0), 1.0, capped_exponential(), method="lp")
    with pytest.raises(InvalidInputError, match="unknown method"):
        utility_maximize(step_tree, call_claim(0.0), 1.0, linear_utility(), method="newton")


@pytest.mark.unit
def test_indifference_price_with_linear_utility(two_step_tree: ScenarioTree) -> None:
    """A risk-neutral buyer pays E[C]."""
    price = indifference_price(two_step_tree, call_claim(0.0), 1.0, linear_utility())
    assert price == pytest.approx(0.5, abs=1e-6)


@pytest.mark.unit
@pytest.mark.parametrize("shift", [0.5, -1.25])
def test_indifference_price_moves_with_cash(drift_tree: ScenarioTree, shift: float) -> None:
    """Adding cash c to the claim adds c to its price."""
    utility = capped_exponential(1.0, -5.0)
    claim = call_claim(0.0)
    tol = 1e-8
    base = indifference_price(drift_tree, claim, 1.0, utility, tol=tol)
    moved = indifference_price(drift_tree, claim.shifted(shift), 1.0, utility, tol=tol)
    assert abs(moved - (base + shift)) <= 2 * tol


@pytest.mark.unit
def test_indifference_price_against_a_price_grid(rng: np.random.Generator) -> None:
    """The price sits where the utility gap changes sign on a dense grid."""
    utility = capped_exponential(1.0, -5.0)
    tree = random_tree(rng, 2, 2)
    claim = random_affine_claim(rng, 2)
    price = indifference_price(tree, claim, 1.0, utility)
    payoff = claim.evaluate(tree)
    grid = np.linspace(payoff.min() - 1.0, payoff.max() + 1.0, 101)
    base = utility_maximize(tree, None, 1.0, utility).value
    gaps = np.array([utility_maximize(tree, claim.shifted(-v), 1.0, utility).value - base for v in grid])
    crossing = int(np.argmax(gaps < 0.0))
    assert gaps[0] >= 0.0 and gaps[-1] < 0.0
    assert grid[crossing - 1] <= price <= grid[crossing]


@pytest.mark.unit
def test_indifference_price_needs_strict_monotonicity(step_tree: ScenarioTree) -> None:
    with pytest.raises(InvalidInputError, match="strictly increasing"):
        indifference_price(step_tree, call_claim(0.0), 1.0, linear_capped())


@pytest.mark.unit
def test_price_range() -> None:
    """Call prices on the +-1 and +-2 coins, one W_1 apart."""
    res = price_range([binomial_walk([1.0]), binomial_walk([2.0])], call_claim(0.0))
    assert (res.low, res.high) == pytest.approx((0.5, 1.0))
    assert res.envelope == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        price_range([], call_claim(0.0))
