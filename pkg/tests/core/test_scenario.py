"""Tests for scenario trees, path laws and their files."""

import json
from pathlib import Path

import numpy as np
import pytest

from adapted_wasserstein.core.errors import InvalidInputError, TreeParseError
from adapted_wasserstein.core.models import random_tree, sign_arbitrage
from adapted_wasserstein.core.scenario import (
    DiscreteDistribution,
    ScenarioTree,
    TreeNode,
    canonicalize,
    load_law,
    load_tree,
    parse_tree,
    same_law,
    save_distribution,
    save_tree,
    terminal_law,
    to_path_law,
    validate,
)
from tests.helpers import tree_from_paths


@pytest.mark.unit
def test_valid_binomial_tree_has_empty_report(two_step_tree: ScenarioTree) -> None:
    """A two-step binomial tree violates nothing."""
    assert validate(two_step_tree) == []


@pytest.mark.unit
def test_probability_sum_violation_is_reported() -> None:
    """Child probabilities 0.5 and 0.6 are reported as a bad sum."""
    tree = ScenarioTree(
        horizon=1,
        nodes=(
            TreeNode("r", 0, 0.0, None, (1, 2), (0.5, 0.6)),
            TreeNode("r.0", 1, 1.0, 0),
            TreeNode("r.1", 1, -1.0, 0),
        ),
    )
    issues = validate(tree)
    assert any("probability sum 1.1" in issue for issue in issues)


@pytest.mark.unit
def test_short_leaf_is_reported() -> None:
    """A leaf at time T-1 is a leaf-depth violation."""
    tree = ScenarioTree(
        horizon=2,
        nodes=(
            TreeNode("r", 0, 0.0, None, (1, 2), (0.5, 0.5)),
            TreeNode("r.0", 1, 1.0, 0, (3,), (1.0,)),
            TreeNode("r.1", 1, -1.0, 0),
            TreeNode("r.0.0", 2, 1.0, 1),
        ),
    )
    assert any("leaf depth 1" in issue for issue in validate(tree))


@pytest.mark.unit
def test_validate_does_not_mutate(two_step_tree: ScenarioTree) -> None:
    """Validation leaves the tree untouched."""
    before = two_step_tree.nodes
    validate(two_step_tree)
    assert two_step_tree.nodes == before


@pytest.mark.unit
def test_one_step_path_law(step_tree: ScenarioTree) -> None:
    """One step to +-1 gives the two paths with mass 1/2."""
    assert to_path_law(step_tree).entries() == [((0.0, -1.0), 0.5), ((0.0, 1.0), 0.5)]


@pytest.mark.unit
def test_deterministic_chain_path_law() -> None:
    """A chain 0 -> 1 -> 2 has one path of mass 1."""
    tree = tree_from_paths([(0.0, 1.0, 2.0)], [1.0])
    assert to_path_law(tree).entries() == [((0.0, 1.0, 2.0), 1.0)]


@pytest.mark.unit
def test_sign_arbitrage_path_law_at_n_one() -> None:
    """The perturbed walk at n = 1 has four paths of mass 1/4."""
    p_n, _ = sign_arbitrage(1)
    entries = sorted(to_path_law(p_n).entries())
    assert entries == sorted(
        [
            ((0.0, 1.0, 1.0), 0.25),
            ((0.0, 1.0, 0.0), 0.25),
            ((0.0, -1.0, 0.0), 0.25),
            ((0.0, -1.0, -1.0), 0.25),
        ]
    )


@pytest.mark.unit
def test_path_law_mass_is_one(rng: np.random.Generator) -> None:
    """Leaf masses sum to one on random trees."""
    for _ in range(10):
        law = to_path_law(random_tree(rng, 3, 4))
        assert law.probs.sum() == pytest.approx(1.0, abs=1e-10)


@pytest.mark.unit
def test_save_then_load_round_trip(tmp_path: Path, rng: np.random.Generator) -> None:
    """A saved tree loads back with the same law and node ids."""
    tree = random_tree(rng, 2, 3)
    loaded = load_tree(save_tree(tree, tmp_path / "tree.json"))
    assert sorted(n.id for n in loaded.nodes) == sorted(n.id for n in tree.nodes)
    assert same_law(loaded, tree)


@pytest.mark.unit
def test_duplicate_node_id_is_a_parse_error() -> None:
    """Two nodes named 'a' are rejected with the id in the message."""
    data = {
        "horizon": 1,
        "root": {
            "value": 0.0,
            "children": [
                {"id": "a", "prob": 0.5, "value": 1.0, "children": []},
                {"id": "a", "prob": 0.5, "value": -1.0, "children": []},
            ],
        },
    }
    with pytest.raises(TreeParseError, match="'a'"):
        parse_tree(data)


@pytest.mark.unit
def test_missing_probability_names_the_node() -> None:
    """A child without `prob` is reported by id."""
    data = {"horizon": 1, "root": {"value": 0.0, "children": [{"value": 1.0, "children": []}]}}
    with pytest.raises(TreeParseError, match="r.0"):
        parse_tree(data)


@pytest.mark.unit
def test_probability_sum_within_tolerance_is_accepted() -> None:
    """A sum of 0.999999999999 is within 1e-12 of one."""
    data = {
        "horizon": 1,
        "root": {
            "value": 0.0,
            "children": [
                {"prob": 0.5, "value": 1.0, "children": []},
                {"prob": 0.499999999999, "value": -1.0, "children": []},
            ],
        },
    }
    assert parse_tree(data).horizon == 1


@pytest.mark.unit
def test_malformed_json_is_a_parse_error(tmp_path: Path) -> None:
    """Truncated JSON is rejected as a parse error."""
    path = tmp_path / "bad.json"
    path.write_text('{"horizon": 1, "root": {', encoding="utf-8")
    with pytest.raises(TreeParseError):
        load_tree(path)


@pytest.mark.unit
def test_canonicalize_merges_and_sorts() -> None:
    """Equal-value siblings merge and children sort by value."""
    tree = ScenarioTree.from_nested(
        {
            "horizon": 1,
            "root": {
                "value": 0.0,
                "children": [
                    {"prob": 0.25, "value": 1.0, "children": []},
                    {"prob": 0.5, "value": -1.0, "children": []},
                    {"prob": 0.25, "value": 1.0, "children": []},
                ],
            },
        }
    )
    canon = canonicalize(tree)
    assert to_path_law(canon).entries() == [((0.0, -1.0), 0.5), ((0.0, 1.0), 0.5)]
    assert same_law(tree, canon)


@pytest.mark.unit
def test_canonicalize_is_idempotent(rng: np.random.Generator) -> None:
    """Canonicalizing twice changes nothing."""
    tree = random_tree(rng, 3, 3)
    once = canonicalize(tree)
    twice = canonicalize(once)
    assert [n.id for n in twice.nodes] == [n.id for n in once.nodes]
    assert same_law(twice, once)
    assert same_law(tree, once)


@pytest.mark.unit
def test_distribution_rejects_bad_weights() -> None:
    """Weights that do not sum to one are refused."""
    with pytest.raises(InvalidInputError):
        DiscreteDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.6]))


@pytest.mark.unit
def test_distribution_canonical_merges_duplicates() -> None:
    """Canonical form is sorted with duplicates merged."""
    dist = DiscreteDistribution(np.array([2.0, 1.0, 2.0]), np.array([0.25, 0.5, 0.25]))
    assert dist.canonical().atoms == [(1.0, 0.5), (2.0, 0.5)]


@pytest.mark.unit
def test_terminal_law(two_step_tree: ScenarioTree) -> None:
    """The two-step walk ends at -2, 0, 2 with masses 1/4, 1/2, 1/4."""
    assert terminal_law(two_step_tree).atoms == [(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]


@pytest.mark.unit
def test_load_law_tells_files_apart(tmp_path: Path, step_tree: ScenarioTree) -> None:
    """Atom files load as distributions, tree files as trees."""
    dist = DiscreteDistribution.uniform([0.0, 1.0])
    law = load_law(save_distribution(dist, tmp_path / "law.json"))
    assert isinstance(law, DiscreteDistribution)
    assert law.atoms == dist.atoms
    assert isinstance(load_law(save_tree(step_tree, tmp_path / "tree.json")), ScenarioTree)


@pytest.mark.unit
def test_saved_file_layout(tmp_path: Path, step_tree: ScenarioTree) -> None:
    """Files follow the nested horizon/root layout with positional ids left out."""
    data = json.loads(save_tree(step_tree, tmp_path / "t.json").read_text(encoding="utf-8"))
    assert data["horizon"] == 1
    assert [c["prob"] for c in data["root"]["children"]] == [0.5, 0.5]
    assert "id" not in data["root"]
