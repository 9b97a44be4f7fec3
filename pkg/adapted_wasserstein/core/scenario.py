"""Finite scenario trees, their path laws, and atomic distributions on the line.

A `ScenarioTree` encodes the law of a discrete-time real-valued process
X_0, ..., X_T. The root carries the deterministic start value X_0; every
other node carries a price level and the probability of the edge into it.

File format (UTF-8 JSON):

    {"horizon": 2,
     "root": {"value": 0.0, "children": [
         {"prob": 0.5, "value": 1.0, "children": [...]},
         {"prob": 0.5, "value": -1.0, "children": [...]}]}}

Nodes may carry an optional string `id`; otherwise ids are positional
(`r`, `r.0`, `r.0.1`, ...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from adapted_wasserstein.core.constants import (
    FLOAT_SLACK,
    GLOBAL_PROB_TOL,
    LOCAL_PROB_TOL,
    MAX_TREE_LEAVES,
)
from adapted_wasserstein.core.errors import (
    InvalidInputError,
    ProblemSizeError,
    TreeParseError,
)
from adapted_wasserstein.utils.serde import SerdeMixin

ROOT_ID = "r"

Kernel = Callable[[int, tuple[float, ...]], Sequence[tuple[float, float]]]


def _close_to_one(total: float, tol: float) -> bool:
    return abs(total - 1.0) <= tol + FLOAT_SLACK


# ---------------------------------------------------------------------------
# In-memory model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeNode:
    """One node of a scenario tree.

    `probs[i]` is the transition probability to `children[i]`; both refer to
    positions in `ScenarioTree.nodes`.
    """

    id: str
    time: int
    value: float
    parent: Optional[int] = None
    children: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class PathLaw:
    """Leaf-path view of a tree: one row per leaf in depth-first order."""

    paths: np.ndarray
    probs: np.ndarray
    nodes: np.ndarray

    @property
    def horizon(self) -> int:
        return int(self.paths.shape[1]) - 1

    @property
    def size(self) -> int:
        return int(self.paths.shape[0])

    def entries(self) -> list[tuple[tuple[float, ...], float]]:
        """(path values, probability) pairs."""
        return [
            (tuple(float(v) for v in row), float(p))
            for row, p in zip(self.paths, self.probs)
        ]


@dataclass(frozen=True)
class ScenarioTree:
    """Immutable finite-horizon scenario tree; `nodes[0]` is the root."""

    horizon: int
    nodes: tuple[TreeNode, ...]

    # ---------- construction ----------
    @classmethod
    def from_nested(cls, data: Mapping[str, Any]) -> "ScenarioTree":
        """Build from the nested file layout (already parsed)."""
        return _from_spec(TreeFile.model_validate(data))

    @classmethod
    def from_kernel(
        cls,
        horizon: int,
        root_value: float,
        kernel: Kernel,
        max_leaves: int = MAX_TREE_LEAVES,
    ) -> "ScenarioTree":
        """Grow a tree forward from a transition kernel.

        Args:
            horizon: Number of time steps T.
            root_value: Deterministic X_0.
            kernel: `kernel(t, prefix)` returns `(prob, value)` pairs for the
                children of the node whose path so far is `prefix`
                (length t+1).
            max_leaves: Refuse to build trees with more leaves than this.
        """
        if horizon < 1:
            raise InvalidInputError(f"horizon must be >= 1, got {horizon}")
        nodes: list[dict[str, Any]] = [
            {"id": ROOT_ID, "time": 0, "value": float(root_value), "parent": None}
        ]
        prefixes: list[tuple[float, ...]] = [(float(root_value),)]
        frontier = [0]
        for t in range(horizon):
            nxt: list[int] = []
            for idx in frontier:
                branches = list(kernel(t, prefixes[idx]))
                if not branches:
                    raise InvalidInputError(
                        f"kernel returned no children at node {nodes[idx]['id']}"
                    )
                kids, probs = [], []
                for i, (prob, value) in enumerate(branches):
                    nodes.append(
                        {
                            "id": f"{nodes[idx]['id']}.{i}",
                            "time": t + 1,
                            "value": float(value),
                            "parent": idx,
                        }
                    )
                    prefixes.append(prefixes[idx] + (float(value),))
                    kids.append(len(nodes) - 1)
                    probs.append(float(prob))
                nodes[idx]["children"] = tuple(kids)
                nodes[idx]["probs"] = tuple(probs)
                nxt.extend(kids)
            if len(nxt) > max_leaves:
                raise ProblemSizeError(
                    f"tree would have more than {max_leaves} nodes at time {t + 1}"
                )
            frontier = nxt
        tree = cls(horizon=horizon, nodes=tuple(TreeNode(**n) for n in nodes))
        logger.debug(f"Built tree with {len(tree.nodes)} nodes, horizon {horizon}")
        return tree

    # ---------- structure ----------
    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @cached_property
    def index(self) -> dict[str, int]:
        """Node id -> position (first occurrence wins)."""
        out: dict[str, int] = {}
        for i, node in enumerate(self.nodes):
            out.setdefault(node.id, i)
        return out

    @cached_property
    def values(self) -> np.ndarray:
        arr = np.array([n.value for n in self.nodes], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def times(self) -> np.ndarray:
        arr = np.array([n.time for n in self.nodes], dtype=int)
        arr.setflags(write=False)
        return arr

    @cached_property
    def levels(self) -> tuple[tuple[int, ...], ...]:
        """Node positions grouped by time."""
        buckets: list[list[int]] = [[] for _ in range(self.horizon + 1)]
        for i, node in enumerate(self.nodes):
            if 0 <= node.time <= self.horizon:
                buckets[node.time].append(i)
        return tuple(tuple(b) for b in buckets)

    @cached_property
    def internal_nodes(self) -> tuple[int, ...]:
        """Non-terminal nodes in storage order; strategies are indexed by these."""
        return tuple(i for i, n in enumerate(self.nodes) if n.children)

    @cached_property
    def reach_probs(self) -> np.ndarray:
        """Probability of passing through each node."""
        out = np.zeros(len(self.nodes))
        out[0] = 1.0
        for i in self._topological():
            for c, p in zip(self.nodes[i].children, self.nodes[i].probs):
                out[c] = out[i] * p
        out.setflags(write=False)
        return out

    def _topological(self) -> list[int]:
        order, stack = [], [0]
        while stack:
            i = stack.pop()
            order.append(i)
            stack.extend(reversed(self.nodes[i].children))
        return order

    @cached_property
    def path_law(self) -> PathLaw:
        ensure_valid(self)
        rows, probs, ids = [], [], []
        T = self.horizon

        def walk(i: int, vals: list[float], nodes: list[int], mass: float) -> None:
            node = self.nodes[i]
            vals, nodes = vals + [node.value], nodes + [i]
            if node.time == T:
                rows.append(vals)
                probs.append(mass)
                ids.append(nodes)
                return
            for c, p in zip(node.children, node.probs):
                walk(c, vals, nodes, mass * p)

        walk(0, [], [], 1.0)
        law = PathLaw(
            paths=np.array(rows, dtype=float),
            probs=np.array(probs, dtype=float),
            nodes=np.array(ids, dtype=int),
        )
        for arr in (law.paths, law.probs, law.nodes):
            arr.setflags(write=False)
        return law

    def node_id(self, i: int) -> str:
        return self.nodes[i].id

    def prefix(self, i: int) -> np.ndarray:
        """Values x_0, ..., x_t along the path from the root to node i."""
        vals = []
        node: Optional[int] = i
        while node is not None:
            vals.append(self.nodes[node].value)
            node = self.nodes[node].parent
        return np.array(vals[::-1], dtype=float)

    def map_values(self, fn: Callable[[float], float]) -> "ScenarioTree":
        """Same shape and probabilities, transformed node values."""
        return ScenarioTree(
            horizon=self.horizon,
            nodes=tuple(
                TreeNode(n.id, n.time, float(fn(n.value)), n.parent, n.children, n.probs)
                for n in self.nodes
            ),
        )


# ---------------------------------------------------------------------------
# Atomic laws on the line
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite atomic probability law on the real line."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if values.shape != weights.shape or values.size == 0:
            raise InvalidInputError("values and weights must be non-empty and aligned")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(weights))):
            raise InvalidInputError("atoms must be finite")
        if np.any(weights <= 0.0) or np.any(weights > 1.0 + FLOAT_SLACK):
            raise InvalidInputError("atom weights must lie in (0, 1]")
        if not _close_to_one(float(weights.sum()), LOCAL_PROB_TOL):
            raise InvalidInputError(f"weights sum to {weights.sum()!r}, not 1")
        values.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_atoms(
        cls,
        values: Iterable[float],
        weights: Iterable[float],
        normalize: bool = False,
    ) -> "DiscreteDistribution":
        """Build from raw atoms, dropping zero weights.

        Args:
            normalize: Rescale weights to sum to one. Used for laws derived
                from tree paths, whose masses only sum to one within the
                global tolerance.
        """
        v = np.asarray(list(values), dtype=float)
        w = np.asarray(list(weights), dtype=float)
        keep = w > 0.0
        v, w = v[keep], w[keep]
        if normalize:
            total = w.sum()
            if not _close_to_one(float(total), GLOBAL_PROB_TOL):
                raise InvalidInputError(f"masses sum to {total!r}, not 1")
            w = w / total
        return cls(v, w)

    @classmethod
    def dirac(cls, value: float) -> "DiscreteDistribution":
        return cls(np.array([float(value)]), np.array([1.0]))

    @classmethod
    def uniform(cls, values: Sequence[float]) -> "DiscreteDistribution":
        n = len(values)
        return cls(np.asarray(values, dtype=float), np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(v), float(w)) for v, w in zip(self.values, self.weights)]

    def mean(self) -> float:
        return float(np.dot(self.values, self.weights))

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(fn(self.values), self.weights))

    def shift(self, c: float) -> "DiscreteDistribution":
        return DiscreteDistribution(self.values + c, self.weights)

    def canonical(self, atol: float = 1e-12) -> "DiscreteDistribution":
        """Sorted by value with (near-)identical atoms merged."""
        order = np.argsort(self.values, kind="stable")
        vals, wts = self.values[order], self.weights[order]
        merged_v: list[float] = []
        merged_w: list[float] = []
        for v, w in zip(vals, wts):
            if merged_v and abs(v - merged_v[-1]) <= atol:
                merged_w[-1] += float(w)
            else:
                merged_v.append(float(v))
                merged_w.append(float(w))
        return DiscreteDistribution(np.array(merged_v), np.array(merged_w))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(tree: ScenarioTree) -> list[str]:
    """List the invariants `tree` violates; an empty list means valid.

    Never raises and never mutates the input.
    """
    issues: list[str] = []
    T = tree.horizon
    if not isinstance(T, int) or T < 1:
        issues.append(f"horizon must be a positive integer, got {T!r}")
        return issues
    if not tree.nodes:
        return ["tree has no nodes"]

    seen: set[str] = set()
    for node in tree.nodes:
        if node.id in seen:
            issues.append(f"duplicate node id '{node.id}'")
        seen.add(node.id)

    roots = [i for i, n in enumerate(tree.nodes) if n.parent is None]
    if roots != [0]:
        issues.append(f"expected exactly one root at position 0, found {len(roots)}")
    if tree.root.time != 0:
        issues.append(f"root '{tree.root.id}' at time {tree.root.time}, expected 0")

    local_ok = True
    n_nodes = len(tree.nodes)
    for i, node in enumerate(tree.nodes):
        if not math.isfinite(node.value):
            issues.append(f"node '{node.id}': non-finite value {node.value!r}")
        if len(node.children) != len(node.probs):
            issues.append(f"node '{node.id}': children and probabilities misaligned")
            local_ok = False
            continue
        if not node.children:
            if node.time != T:
                issues.append(
                    f"node '{node.id}': leaf depth {node.time}, expected {T}"
                )
            continue
        if node.time >= T:
            issues.append(f"node '{node.id}': has children at time {node.time} >= {T}")
        for c, p in zip(node.children, node.probs):
            if not 0 <= c < n_nodes:
                issues.append(f"node '{node.id}': child reference {c} out of range")
                local_ok = False
                continue
            child = tree.nodes[c]
            if child.parent != i:
                issues.append(f"node '{child.id}': parent link does not match")
            if child.time != node.time + 1:
                issues.append(
                    f"node '{child.id}': time {child.time}, expected {node.time + 1}"
                )
            if not (math.isfinite(p) and 0.0 < p <= 1.0 + FLOAT_SLACK):
                issues.append(f"node '{child.id}': probability {p!r} outside (0, 1]")
                local_ok = False
        total = float(sum(node.probs))
        if not _close_to_one(total, LOCAL_PROB_TOL):
            issues.append(f"node '{node.id}': probability sum {total!r} != 1")
            local_ok = False

    if local_ok and not issues:
        leaf_mass = float(
            sum(tree.reach_probs[i] for i in tree.levels[T] if not tree.nodes[i].children)
        )
        if not _close_to_one(leaf_mass, GLOBAL_PROB_TOL):
            issues.append(f"path probabilities sum to {leaf_mass!r} != 1")
    return issues


def ensure_valid(tree: ScenarioTree) -> ScenarioTree:
    """Raise `InvalidInputError` listing violations, else return the tree."""
    issues = validate(tree)
    if issues:
        raise InvalidInputError("invalid scenario tree: " + "; ".join(issues[:5]))
    return tree


def to_path_law(tree: ScenarioTree) -> PathLaw:
    """Leaf enumeration, depth first, children in stored order."""
    return tree.path_law


def check_same_horizon(a: ScenarioTree, b: ScenarioTree) -> int:
    if a.horizon != b.horizon:
        raise InvalidInputError(f"horizon mismatch: {a.horizon} vs {b.horizon}")
    return a.horizon


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------


def canonicalize(tree: ScenarioTree) -> ScenarioTree:
    """Sort children by value and merge equal-value siblings.

    Idempotent and law-preserving: the result depends on the path law only.
    """
    law = to_path_law(tree)
    T = tree.horizon

    def build(rows: np.ndarray, t: int) -> dict[str, Any]:
        mass = float(law.probs[rows].sum())
        spec: dict[str, Any] = {"value": float(law.paths[rows[0], t]), "children": []}
        if t == T:
            return spec
        col = law.paths[rows, t + 1]
        for v in np.unique(col):
            sub = rows[col == v]
            child = build(sub, t + 1)
            child["prob"] = float(law.probs[sub].sum()) / mass
            spec["children"].append(child)
        return spec

    return ScenarioTree.from_nested(
        {"horizon": T, "root": build(np.arange(law.size), 0)}
    )


def same_law(a: ScenarioTree, b: ScenarioTree, tol: float = 1e-9) -> bool:
    """Whether two trees encode the same path law."""
    if a.horizon != b.horizon:
        return False
    la, lb = to_path_law(canonicalize(a)), to_path_law(canonicalize(b))
    if la.size != lb.size:
        return False
    return bool(
        np.allclose(la.paths, lb.paths, rtol=0.0, atol=1e-12)
        and np.allclose(la.probs, lb.probs, rtol=0.0, atol=tol)
    )


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


class NodeSpec(BaseModel):
    """One node in the nested tree file layout."""

    model_config = ConfigDict(extra="forbid")

    id: Optional[str] = None
    value: float
    prob: Optional[float] = None
    children: list["NodeSpec"] = Field(default_factory=list)


class TreeFile(SerdeMixin):
    """Top-level tree file."""

    model_config = ConfigDict(extra="forbid")

    horizon: int = Field(ge=1)
    root: NodeSpec


def _from_spec(spec: TreeFile) -> ScenarioTree:
    nodes: list[dict[str, Any]] = []
    seen: set[str] = set()
    stack: list[tuple[NodeSpec, Optional[int], str, int]] = [(spec.root, None, ROOT_ID, 0)]
    while stack:
        node, parent, default_id, t = stack.pop()
        nid = node.id if node.id is not None else default_id
        if nid in seen:
            raise TreeParseError(f"duplicate node id '{nid}'")
        seen.add(nid)
        if parent is not None and node.prob is None:
            raise TreeParseError(f"node '{nid}': missing transition probability")
        idx = len(nodes)
        nodes.append(
            {"id": nid, "time": t, "value": node.value, "parent": parent, "prob": node.prob}
        )
        if parent is not None:
            nodes[parent]["kids"].append(idx)
        nodes[idx]["kids"] = []
        for j in range(len(node.children) - 1, -1, -1):
            stack.append((node.children[j], idx, f"{nid}.{j}", t + 1))

    built = []
    for n in nodes:
        kids = tuple(n["kids"])
        built.append(
            TreeNode(
                id=n["id"],
                time=n["time"],
                value=float(n["value"]),
                parent=n["parent"],
                children=kids,
                probs=tuple(float(nodes[k]["prob"]) for k in kids),
            )
        )
    return ScenarioTree(horizon=spec.horizon, nodes=tuple(built))


def parse_tree(source: Union[Mapping[str, Any], str, Path]) -> ScenarioTree:
    """Parse and validate a tree from a mapping, JSON text or file path.

    Raises:
        TreeParseError: on malformed input; the message names the node.
    """
    try:
        spec = TreeFile.from_json(source)
    except InvalidInputError as e:
        raise TreeParseError(str(e)) from e
    tree = _from_spec(spec)
    issues = validate(tree)
    if issues:
        raise TreeParseError("; ".join(issues[:5]))
    return tree


def load_tree(path: Union[str, Path]) -> ScenarioTree:
    """Load a tree file."""
    tree = parse_tree(Path(path))
    logger.debug(f"Loaded tree from {path}: {len(tree.nodes)} nodes")
    return tree


def tree_to_file(tree: ScenarioTree) -> TreeFile:
    """Nested file model; positional ids are left implicit."""

    def spec(i: int, default_id: str, prob: Optional[float]) -> NodeSpec:
        node = tree.nodes[i]
        return NodeSpec(
            id=None if node.id == default_id else node.id,
            value=node.value,
            prob=prob,
            children=[
                spec(c, f"{node.id}.{j}", p)
                for j, (c, p) in enumerate(zip(node.children, node.probs))
            ],
        )

    return TreeFile(horizon=tree.horizon, root=spec(0, ROOT_ID, None))


def save_tree(tree: ScenarioTree, path: Union[str, Path]) -> Path:
    """Write a tree file."""
    ensure_valid(tree)
    return tree_to_file(tree).save_json(path, exclude_none=True)


class DistributionFile(SerdeMixin):
    """Atomic law file: `{"atoms": [[value, weight], ...]}`."""

    model_config = ConfigDict(extra="forbid")

    atoms: list[tuple[float, float]] = Field(min_length=1)

    def to_distribution(self) -> DiscreteDistribution:
        values, weights = zip(*self.atoms)
        return DiscreteDistribution.from_atoms(values, weights)


def terminal_law(tree: ScenarioTree) -> DiscreteDistribution:
    """Law of X_T, canonical form."""
    law = to_path_law(tree)
    return DiscreteDistribution.from_atoms(law.paths[:, -1], law.probs, normalize=True).canonical()


def load_law(path: Union[str, Path]) -> Union[ScenarioTree, DiscreteDistribution]:
    """Load either a tree file or an atomic law file, told apart by the `atoms` key."""
    text = SerdeMixin._read_source(Path(path))
    if '"atoms"' in text:
        try:
            return DistributionFile.from_json(text).to_distribution()
        except InvalidInputError as e:
            raise TreeParseError(f"{path}: {e}") from e
    return parse_tree(text)


def save_distribution(dist: DiscreteDistribution, path: Union[str, Path]) -> Path:
    return DistributionFile(atoms=dist.atoms).save_json(path)
