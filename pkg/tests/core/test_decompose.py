"""Tests for the Doob decomposition and the path functionals built on it."""

import math
from pathlib import Path

import numpy as np
import pytest

from adapted_wasserstein.core.decompose import (
    ConstantsLedger,
    distance_to_constant,
    doob_decompose,
    dump_csv,
    pair_increments,
    seminorm,
)
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.models import random_tree
from adapted_wasserstein.core.scenario import ScenarioTree
from tests.helpers import tree_from_paths


@pytest.mark.unit
def test_symmetric_walk_is_a_martingale(two_step_tree: ScenarioTree) -> None:
    """The +-1 walk has zero drift everywhere."""
    dec = doob_decompose(two_step_tree)
    assert dec.is_martingale()
    assert dec.violations() == []


@pytest.mark.unit
def test_drift_and_martingale_increments(drift_tree: ScenarioTree) -> None:
    """Drift is 0.5 after an up move and -0.1 after a down move."""
    dec = doob_decompose(drift_tree)
    idx = drift_tree.index
    assert dec.drift[idx["r"]] == pytest.approx(0.0)
    assert dec.drift[idx["r.0"]] == pytest.approx(0.5)
    assert dec.drift[idx["r.1"]] == pytest.approx(-0.1)
    assert dec.martingale[idx["r.0.0"]] == pytest.approx(1.5)
    assert dec.martingale[idx["r.1.1"]] == pytest.approx(-0.9)
    assert not dec.is_martingale()
    assert dec.violations() == []


@pytest.mark.unit
def test_increments_reconstruct_the_path(rng: np.random.Generator) -> None:
    """dM + dA sums to X_T - X_0 along every path."""
    for _ in range(5):
        tree = random_tree(rng, 3, 3)
        dec = doob_decompose(tree)
        dm, da = dec.path_increments
        paths = tree.path_law.paths
        np.testing.assert_allclose((dm + da).sum(axis=1), paths[:, -1] - paths[:, 0], atol=1e-12)


@pytest.mark.unit
def test_seminorm_of_the_walk(step_tree: ScenarioTree, two_step_tree: ScenarioTree) -> None:
    """One unit step has seminorm 1; two steps at p = 2 give sqrt(2)."""
    assert seminorm(step_tree, 1.0) == pytest.approx(1.0)
    assert seminorm(step_tree, 2.0) == pytest.approx(1.0)
    assert seminorm(two_step_tree, 2.0) == pytest.approx(math.sqrt(2.0))


@pytest.mark.unit
def test_deterministic_path_is_pure_drift() -> None:
    """A chain 0 -> 1 -> 2 has no martingale part and variation 2."""
    chain = tree_from_paths([(0.0, 1.0, 2.0)], [1.0])
    assert seminorm(chain, 1.0) == pytest.approx(2.0)
    assert seminorm(chain, 3.0) == pytest.approx(2.0)
    assert distance_to_constant(chain, 1.0, level=1.0) == pytest.approx(3.0)


@pytest.mark.unit
def test_seminorm_rejects_small_p(step_tree: ScenarioTree) -> None:
    """p below one is refused."""
    with pytest.raises(InvalidInputError):
        seminorm(step_tree, 0.5)


@pytest.mark.unit
def test_pair_increments_by_leaf_id(step_tree: ScenarioTree) -> None:
    """The down leaf against the up leaf differs by -2 in dM."""
    dm, da = pair_increments(step_tree, step_tree, "r.0", "r.1")
    np.testing.assert_allclose(dm, [-2.0])
    np.testing.assert_allclose(da, [0.0])


@pytest.mark.unit
def test_pair_increments_reject_inner_nodes(two_step_tree: ScenarioTree) -> None:
    """Only leaves identify paths."""
    with pytest.raises(InvalidInputError, match="not a leaf"):
        pair_increments(two_step_tree, two_step_tree, "r.0", "r.1.1")


@pytest.mark.unit
def test_dump_csv_has_one_row_per_node_and_edge(two_step_tree: ScenarioTree, tmp_path: Path) -> None:
    """Three inner nodes and six edges give nine rows plus the header."""
    path = dump_csv(doob_decompose(two_step_tree), tmp_path / "dec.csv")
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "kind,node_id,parent_id,t,delta_a,delta_m"
    assert len(lines) == 10


@pytest.mark.unit
def test_ledger_constants() -> None:
    """b_1 = 6, b_2 = 2 and derived constants are recorded."""
    ledger = ConstantsLedger(p=1.0)
    assert ledger.b_p == 6.0
    assert ledger.r(lipschitz=1.0, k=1.0, alpha=0.5) == pytest.approx(24.0)
    assert ledger.contraction(k=1.0, lipschitz=1.0) == pytest.approx(12.0)
    assert set(ledger.derived) == {"r", "contraction"}

    ledger_2 = ConstantsLedger(p=2.0)
    assert ledger_2.contraction(k=0.5, lipschitz=0.5) == pytest.approx(2.0)
    assert ledger_2.c_p() == pytest.approx(1.0)


@pytest.mark.unit
def test_ledger_refuses_other_bdg_constants() -> None:
    """b_1 is fixed and p in (1, 2) has no constant."""
    with pytest.raises(ValueError):
        ConstantsLedger(b_1=5.0)
    with pytest.raises(ValueError):
        ConstantsLedger(p=1.5)
