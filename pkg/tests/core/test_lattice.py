"""Tests for recombining binomial lattices."""

import math

import numpy as np
import pytest

from adapted_wasserstein.core.bicausal import synchronous_value
from adapted_wasserstein.core.errors import InvalidInputError, ProblemSizeError
from adapted_wasserstein.core.lattice import (
    BinomialLattice,
    gbm_lattice,
    random_walk_lattice,
    replicate,
    synchronous_cost,
)


@pytest.mark.unit
def test_walk_lattice_states() -> None:
    """Two steps of a unit walk end at -sqrt(2), 0, sqrt(2)."""
    lattice = random_walk_lattice(2, 1.0)
    np.testing.assert_allclose(lattice.values[-1], [-math.sqrt(2.0), 0.0, math.sqrt(2.0)])
    np.testing.assert_allclose(lattice.state_probs()[-1], [0.25, 0.5, 0.25])
    assert lattice.is_martingale()


@pytest.mark.unit
def test_gbm_lattice_is_a_martingale() -> None:
    """Up and down factors 1 +- sigma sqrt(dt) keep the mean at one."""
    lattice = gbm_lattice(50, 0.3)
    assert lattice.is_martingale()
    assert lattice.terminal_law().mean() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.unit
def test_drifting_walk_is_not_a_martingale() -> None:
    """A drift of 2 per unit time shows up as drift 2 dt per step."""
    lattice = random_walk_lattice(4, 1.0, drift=2.0)
    assert not lattice.is_martingale()
    np.testing.assert_allclose(lattice.drift(1), np.full(2, 0.5))


@pytest.mark.unit
def test_invalid_lattices() -> None:
    """Misshapen rows, bad probabilities and too-large moves are refused."""
    with pytest.raises(InvalidInputError, match="states"):
        BinomialLattice.from_arrays([[0.0], [1.0]], [[0.5]])
    with pytest.raises(InvalidInputError, match="probabilities"):
        BinomialLattice.from_arrays([[0.0], [-1.0, 1.0]], [[1.5]])
    with pytest.raises(InvalidInputError, match="non-positive"):
        gbm_lattice(1, 2.0)


@pytest.mark.unit
def test_expansion_matches_the_lattice() -> None:
    """The expanded tree has 2^N leaves and the same terminal law."""
    lattice = random_walk_lattice(3, 0.7, root=1.0)
    tree = lattice.to_tree()
    law = tree.path_law
    assert law.size == 8
    assert np.dot(law.probs, law.paths[:, -1]) == pytest.approx(1.0)
    with pytest.raises(ProblemSizeError):
        random_walk_lattice(20, 1.0).to_tree(max_leaves=1024)


@pytest.mark.unit
def test_replication_price_is_the_expected_payoff() -> None:
    """The backward price of a call equals its expectation under the terminal law."""
    lattice = gbm_lattice(30, 0.2)
    rep = replicate(lattice, lambda x: np.maximum(x - 1.0, 0.0))
    expected = lattice.terminal_law().expect(lambda x: np.maximum(x - 1.0, 0.0))
    assert rep.price == pytest.approx(expected, abs=1e-12)
    assert all(0.0 <= d.min() and d.max() <= 1.0 for d in rep.delta)


@pytest.mark.unit
@pytest.mark.parametrize("p", [1.0, 2.0])
def test_walk_scaling(p: float) -> None:
    """Synchronous walks differ by |sigma - sigma'| sqrt(T) for p in {1, 2}."""
    cost = synchronous_cost(random_walk_lattice(40, 0.5), random_walk_lattice(40, 0.8), p)
    assert cost.value == pytest.approx(0.3, abs=1e-9)


@pytest.mark.unit
def test_drift_difference() -> None:
    """Equal volatility, drifts 0 and 1: AW_1 of the synchronous coupling is T |mu1 - mu2|."""
    cost = synchronous_cost(random_walk_lattice(8, 1.0), random_walk_lattice(8, 1.0, drift=1.0), 1.0)
    assert cost.value == pytest.approx(1.0, abs=1e-9)


@pytest.mark.unit
@pytest.mark.parametrize("p", [1.0, 2.0])
def test_lattice_cost_matches_the_tree(p: float) -> None:
    """The product-lattice sum equals the synchronous coupling on expanded trees."""
    a, b = gbm_lattice(4, 0.2), gbm_lattice(4, 0.35)
    on_trees = synchronous_value(a.to_tree(), b.to_tree(), p)
    assert synchronous_cost(a, b, p).expected_cost == pytest.approx(on_trees.expected_cost, abs=1e-10)


@pytest.mark.unit
def test_step_mismatch() -> None:
    """Lattices must have the same number of steps."""
    with pytest.raises(InvalidInputError, match="step mismatch"):
        synchronous_cost(random_walk_lattice(2, 1.0), random_walk_lattice(3, 1.0))
