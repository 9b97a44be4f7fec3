"""Adapted Wasserstein distances over bi-causal couplings of scenario trees.

`adapted_wasserstein_lp` is the general engine. `adapted_wasserstein_dp`
runs the backward recursion for stage-additive costs, and
`synchronous_coupling` builds the stepwise comonotone coupling, whose cost
bounds AW_p from above.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from loguru import logger
from pydantic import ConfigDict, Field

from adapted_wasserstein.core.constants import CAUSALITY_TOL, MARGINAL_TOL
from adapted_wasserstein.core.decompose import doob_decompose
from adapted_wasserstein.core.errors import InvalidInputError, ProblemSizeError
from adapted_wasserstein.core.scenario import (
    PathLaw,
    ScenarioTree,
    check_same_horizon,
    ensure_valid,
    same_law,
    to_path_law,
)
from adapted_wasserstein.core.simplex import LinearProgram, solve_lp
from adapted_wasserstein.core.transport import (
    Coupling,
    TransportResult,
    solve_transport,
    sorted_plan,
)
from adapted_wasserstein.utils.serde import SerdeMixin

ArrayFn = Callable[..., np.ndarray]


# ---------------------------------------------------------------------------
# Couplings
# ---------------------------------------------------------------------------


def _descends(law: PathLaw, t: int, node: int) -> np.ndarray:
    return law.nodes[:, t] == node


@dataclass(frozen=True, eq=False)
class BiCausalCoupling:
    """Joint weights per (P-leaf, Q-leaf) pair, rows and columns in path-law order."""

    tree_p: ScenarioTree
    tree_q: ScenarioTree
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        shape = (to_path_law(self.tree_p).size, to_path_law(self.tree_q).size)
        if w.shape != shape:
            raise InvalidInputError(f"coupling shape {w.shape}, expected {shape}")
        object.__setattr__(self, "weights", np.where(np.abs(w) < 1e-15, 0.0, w))

    @property
    def law_p(self) -> PathLaw:
        return to_path_law(self.tree_p)

    @property
    def law_q(self) -> PathLaw:
        return to_path_law(self.tree_q)

    def expect(self, cost: np.ndarray) -> float:
        return float(np.sum(self.weights * cost))

    def as_coupling(self) -> Coupling:
        """Plain coupling of the path laws, labelled by leaf ids."""
        law_p, law_q = self.law_p, self.law_q
        return Coupling(
            law_p,
            law_q,
            self.weights,
            tuple(self.tree_p.node_id(int(i)) for i in law_p.nodes[:, -1]),
            tuple(self.tree_q.node_id(int(i)) for i in law_q.nodes[:, -1]),
        )

    def dump_csv(self, path: Union[str, Path]) -> Path:
        return self.as_coupling().dump_csv(path)

    def causality_violations(self, tol: float = CAUSALITY_TOL, mirrored: bool = False) -> list[str]:
        """Pairwise-prefix check of causality X -> Y (or Y -> X when mirrored).

        For paths w, w' agreeing up to t and every prefix g of the other
        side at time t: P(w') pi(w, g) = P(w) pi(w', g). Paths in one prefix
        class are chained consecutively.
        """
        if mirrored:
            own, other, weights = self.law_q, self.law_p, self.weights.T
            own_tree = self.tree_q
            label = "Y->X"
        else:
            own, other, weights = self.law_p, self.law_q, self.weights
            own_tree = self.tree_p
            label = "X->Y"
        issues = []
        for t in range(own.horizon):
            prefixes = np.unique(other.nodes[:, t])
            onto = (other.nodes[:, t][:, None] == prefixes[None, :]).astype(float)
            mass = weights @ onto
            for node in np.unique(own.nodes[:, t]):
                members = np.nonzero(own.nodes[:, t] == node)[0]
                for a, b in zip(members[:-1], members[1:]):
                    gap = own.probs[b] * mass[a] - own.probs[a] * mass[b]
                    worst = float(np.max(np.abs(gap)))
                    if worst > tol:
                        issues.append(
                            f"{label} at t={t}, prefix '{own_tree.node_id(int(node))}': "
                            f"gap {worst:.3e}"
                        )
        return issues

    def violations(self, tol: float = MARGINAL_TOL) -> list[str]:
        issues = []
        if np.any(self.weights < -tol):
            issues.append(f"negative weight {float(self.weights.min()):.3e}")
        rows = float(np.max(np.abs(self.weights.sum(axis=1) - self.law_p.probs)))
        cols = float(np.max(np.abs(self.weights.sum(axis=0) - self.law_q.probs)))
        if rows > tol:
            issues.append(f"P marginal off by {rows:.3e}")
        if cols > tol:
            issues.append(f"Q marginal off by {cols:.3e}")
        issues += self.causality_violations(CAUSALITY_TOL)
        issues += self.causality_violations(CAUSALITY_TOL, mirrored=True)
        return issues


class AWResult(NamedTuple):
    value: float
    coupling: BiCausalCoupling
    expected_cost: float


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------


def pair_cost(tree_p: ScenarioTree, tree_q: ScenarioTree, p: float) -> np.ndarray:
    """AW_p cost per leaf pair.

    (sum_t (dM^X - dM^Y)^2)^{p/2} + (|x_0 - y_0| + sum_t |dA^X - dA^Y|)^p,
    each Doob decomposition taken under its own tree.
    """
    if not p >= 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")
    check_same_horizon(tree_p, tree_q)
    dm_p, da_p = doob_decompose(tree_p).path_increments
    dm_q, da_q = doob_decompose(tree_q).path_increments
    qv = np.sum((dm_p[:, None, :] - dm_q[None, :, :]) ** 2, axis=2)
    var1 = abs(tree_p.root.value - tree_q.root.value) + np.sum(
        np.abs(da_p[:, None, :] - da_q[None, :, :]), axis=2
    )
    return qv ** (p / 2.0) + var1**p


def sup_distance(tree_p: ScenarioTree, tree_q: ScenarioTree) -> np.ndarray:
    """Sup-norm distance per leaf pair."""
    a, b = to_path_law(tree_p).paths, to_path_law(tree_q).paths
    return np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2)


# ---------------------------------------------------------------------------
# LP over bi-causal couplings
# ---------------------------------------------------------------------------


def _kernel_rows(
    own_tree: ScenarioTree, own: PathLaw, other: PathLaw, transpose: bool
) -> list[np.ndarray]:
    """pi(u', v) = P(u'|u) pi(u, v) for internal u at t, all but one child u', v at t."""
    rows = []
    for t in range(own.horizon):
        other_nodes = np.unique(other.nodes[:, t])
        for u in own_tree.levels[t]:
            node = own_tree.nodes[u]
            if len(node.children) < 2:
                continue
            in_u = _descends(own, t, u).astype(float)
            for c, prob in zip(node.children[:-1], node.probs[:-1]):
                lhs = _descends(own, t + 1, c).astype(float) - prob * in_u
                for v in other_nodes:
                    in_v = _descends(other, t, v).astype(float)
                    block = np.outer(in_v, lhs) if transpose else np.outer(lhs, in_v)
                    rows.append(block.ravel())
    return rows


def bicausal_lp(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    cost: np.ndarray,
    max_variables: Optional[int] = None,
) -> tuple[float, BiCausalCoupling]:
    """min E_pi[cost] over bi-causal couplings; returns (expected cost, coupling)."""
    from adapted_wasserstein.settings import settings

    check_same_horizon(tree_p, tree_q)
    law_p, law_q = to_path_law(ensure_valid(tree_p)), to_path_law(ensure_valid(tree_q))
    n, m = law_p.size, law_q.size
    limit = max_variables if max_variables is not None else settings.lp_max_variables
    if n * m > limit:
        raise ProblemSizeError(f"bi-causal LP needs {n * m} variables, limit is {limit}")
    if cost.shape != (n, m):
        raise InvalidInputError(f"cost shape {cost.shape}, expected {(n, m)}")

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    for i in range(n):
        r = np.zeros((n, m))
        r[i, :] = 1.0
        rows.append(r.ravel())
        rhs.append(float(law_p.probs[i]))
    for j in range(m - 1):
        r = np.zeros((n, m))
        r[:, j] = 1.0
        rows.append(r.ravel())
        rhs.append(float(law_q.probs[j]))
    kernel = _kernel_rows(tree_p, law_p, law_q, transpose=False)
    kernel += _kernel_rows(tree_q, law_q, law_p, transpose=True)
    rows += kernel
    rhs += [0.0] * len(kernel)
    logger.debug(f"bicausal_lp: {n * m} variables, {len(rows)} rows ({len(kernel)} causal)")

    res = solve_lp(
        LinearProgram(c=cost.ravel(), a_eq=np.array(rows), b_eq=np.array(rhs)),
        max_variables=limit,
    ).require_optimal("bi-causal LP")
    coupling = BiCausalCoupling(tree_p, tree_q, res.x.reshape(n, m))  # type: ignore[union-attr]
    return coupling.expect(cost), coupling


def adapted_wasserstein_lp(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    p: float = 1.0,
    max_variables: Optional[int] = None,
) -> AWResult:
    """AW_p(P, Q) = inf over bi-causal pi of E_pi[c_p]^{1/p}, solved exactly.

    Raises:
        ProblemSizeError: the leaf-pair count exceeds the LP limit.
    """
    cost = pair_cost(tree_p, tree_q, p)
    expected, coupling = bicausal_lp(tree_p, tree_q, cost, max_variables)
    expected = max(expected, 0.0)
    return AWResult(expected ** (1.0 / p), coupling, expected)


def unconstrained_transport(tree_p: ScenarioTree, tree_q: ScenarioTree, p: float) -> TransportResult:
    """Same cost as AW_p minimized over all couplings of the path laws.

    A lower bound for AW_p; equal to it in one period, where bi-causality
    is vacuous.
    """
    cost = pair_cost(tree_p, tree_q, p)
    law_p, law_q = to_path_law(tree_p), to_path_law(tree_q)
    value, plan = solve_transport(law_p.probs, law_q.probs, cost)
    return TransportResult(max(value, 0.0) ** (1.0 / p), Coupling(law_p, law_q, plan))


# ---------------------------------------------------------------------------
# Backward recursion for stage-additive costs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageCost:
    """Stage-additive path cost: root(x0, y0) + sum_t edge(x_t, x_{t+1}, y_t, y_{t+1})."""

    name: str
    power: float
    edge: ArrayFn
    root: ArrayFn
    requires_martingale: bool = False

    def path_matrix(self, tree_p: ScenarioTree, tree_q: ScenarioTree) -> np.ndarray:
        """Total cost per leaf pair."""
        x = to_path_law(tree_p).paths[:, None, :]
        y = to_path_law(tree_q).paths[None, :, :]
        total = self.root(x[..., 0], y[..., 0])
        for t in range(x.shape[2] - 1):
            total = total + self.edge(x[..., t], x[..., t + 1], y[..., t], y[..., t + 1])
        return np.asarray(total, dtype=float)


def martingale_quadratic() -> StageCost:
    """AW_2^2 cost for martingale trees: sum_t (dX_t - dY_t)^2 plus (x0 - y0)^2."""
    return StageCost(
        name="martingale_quadratic",
        power=2.0,
        edge=lambda xu, xc, yv, yd: ((xc - xu) - (yd - yv)) ** 2,
        root=lambda x, y: (x - y) ** 2,
        requires_martingale=True,
    )


def nested_power(p: float) -> StageCost:
    """Nested distance cost sum_t |x_t - y_t|^p."""
    if not p >= 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")
    return StageCost(
        name=f"nested_power({p:g})",
        power=float(p),
        edge=lambda xu, xc, yv, yd: np.abs(xc - yd) ** p,
        root=lambda x, y: np.abs(x - y) ** p,
    )


def stage_cost_for(name: str, p: float) -> StageCost:
    """Look up a stage-additive cost by name.

    The AW_p cost is stage additive only for martingales at p = 2; any other
    request for it is refused.
    """
    if name in ("martingale_quadratic", "aw"):
        if p != 2:
            raise InvalidInputError(
                f"the AW_{p:g} cost is not stage additive; only p = 2 on martingale "
                "trees admits the backward recursion (use the LP instead)"
            )
        return martingale_quadratic()
    if name in ("nested", "nested_power"):
        return nested_power(p)
    raise InvalidInputError(f"unknown stage cost '{name}'")


class DPResult(NamedTuple):
    value: float
    expected_cost: float
    coupling: BiCausalCoupling


def _compose(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    kernel: Callable[[int, int], np.ndarray],
) -> np.ndarray:
    """Chain per-node-pair child couplings forward into leaf-pair weights."""
    law_p, law_q = to_path_law(tree_p), to_path_law(tree_q)
    row_p = {int(leaf): r for r, leaf in enumerate(law_p.nodes[:, -1])}
    row_q = {int(leaf): r for r, leaf in enumerate(law_q.nodes[:, -1])}
    frontier: dict[tuple[int, int], float] = {(0, 0): 1.0}
    for _ in range(tree_p.horizon):
        nxt: dict[tuple[int, int], float] = {}
        for (u, v), mass in frontier.items():
            plan = kernel(u, v)
            kids_p, kids_q = tree_p.nodes[u].children, tree_q.nodes[v].children
            for (i, c), (j, d) in itertools.product(enumerate(kids_p), enumerate(kids_q)):
                w = mass * float(plan[i, j])
                if w > 0.0:
                    nxt[(c, d)] = nxt.get((c, d), 0.0) + w
        frontier = nxt
    weights = np.zeros((law_p.size, law_q.size))
    for (c, d), mass in frontier.items():
        weights[row_p[c], row_q[d]] += mass
    return weights


def adapted_wasserstein_dp(
    tree_p: ScenarioTree, tree_q: ScenarioTree, stage_cost: StageCost
) -> DPResult:
    """Backward recursion V(u, v) = min_lambda sum lambda (stage + V(children)).

    Raises:
        InvalidInputError: the cost needs martingale trees and one is not.
    """
    check_same_horizon(tree_p, tree_q)
    ensure_valid(tree_p)
    ensure_valid(tree_q)
    if stage_cost.requires_martingale:
        for label, tree in (("P", tree_p), ("Q", tree_q)):
            if not doob_decompose(tree).is_martingale(1e-10):
                raise InvalidInputError(
                    f"{stage_cost.name} needs martingale trees; {label} has drift"
                )
    T = tree_p.horizon
    xs, ys = tree_p.values, tree_q.values
    value_next: dict[tuple[int, int], float] = {
        (u, v): 0.0 for u in tree_p.levels[T] for v in tree_q.levels[T]
    }
    plans: dict[tuple[int, int], np.ndarray] = {}
    for t in range(T - 1, -1, -1):
        value_now: dict[tuple[int, int], float] = {}
        for u, v in itertools.product(tree_p.levels[t], tree_q.levels[t]):
            nu, nv = tree_p.nodes[u], tree_q.nodes[v]
            kids_p, kids_q = np.array(nu.children), np.array(nv.children)
            stage = stage_cost.edge(
                xs[u], xs[kids_p][:, None], ys[v], ys[kids_q][None, :]
            )
            cont = np.array([[value_next[(c, d)] for d in kids_q] for c in kids_p])
            cost, plan = solve_transport(np.array(nu.probs), np.array(nv.probs), stage + cont)
            value_now[(u, v)] = cost
            plans[(u, v)] = plan
        value_next = value_now
    total = float(stage_cost.root(xs[0], ys[0])) + value_next[(0, 0)]
    total = max(total, 0.0)
    coupling = BiCausalCoupling(tree_p, tree_q, _compose(tree_p, tree_q, lambda u, v: plans[(u, v)]))
    logger.debug(f"adapted_wasserstein_dp: {stage_cost.name} cost {total:.12g}")
    return DPResult(total ** (1.0 / stage_cost.power), total, coupling)


# ---------------------------------------------------------------------------
# Synchronous coupling
# ---------------------------------------------------------------------------


def synchronous_coupling(tree_p: ScenarioTree, tree_q: ScenarioTree) -> BiCausalCoupling:
    """Stepwise comonotone coupling of the child laws, composed forward.

    Always bi-causal; its AW cost bounds the optimum from above.
    """
    check_same_horizon(tree_p, tree_q)
    ensure_valid(tree_p)
    ensure_valid(tree_q)
    xs, ys = tree_p.values, tree_q.values

    def kernel(u: int, v: int) -> np.ndarray:
        nu, nv = tree_p.nodes[u], tree_q.nodes[v]
        return sorted_plan(
            np.array(nu.probs), xs[list(nu.children)], np.array(nv.probs), ys[list(nv.children)]
        )

    return BiCausalCoupling(tree_p, tree_q, _compose(tree_p, tree_q, kernel))


def synchronous_value(tree_p: ScenarioTree, tree_q: ScenarioTree, p: float) -> AWResult:
    """AW_p cost of the synchronous coupling (an upper bound)."""
    coupling = synchronous_coupling(tree_p, tree_q)
    expected = max(coupling.expect(pair_cost(tree_p, tree_q, p)), 0.0)
    return AWResult(expected ** (1.0 / p), coupling, expected)


# ---------------------------------------------------------------------------
# Metric axioms
# ---------------------------------------------------------------------------


class MetricAxiomReport(SerdeMixin):
    """Symmetry, identity of indiscernibles and triangle checks on a tree list."""

    model_config = ConfigDict(extra="forbid")

    p: float
    n_trees: int
    tolerance: float
    distances: list[list[float]]
    symmetry_gap: float
    triangle_slack: float
    identity_failures: list[str] = Field(default_factory=list)
    passed: bool


def check_metric_axioms(
    trees: Sequence[ScenarioTree],
    p: float = 1.0,
    tolerance: float = 1e-7,
    zero_tol: float = 1e-8,
    distance: Optional[Callable[[ScenarioTree, ScenarioTree, float], float]] = None,
) -> MetricAxiomReport:
    """Evaluate AW_p on all ordered pairs and check the metric axioms.

    `triangle_slack` is min over triples of d(i,k) + d(k,j) - d(i,j).
    """
    if len(trees) < 3:
        raise InvalidInputError(f"need at least 3 trees, got {len(trees)}")
    dist = distance or (lambda a, b, q: adapted_wasserstein_lp(a, b, q).value)
    n = len(trees)
    d = np.zeros((n, n))
    for i, j in itertools.product(range(n), repeat=2):
        d[i, j] = dist(trees[i], trees[j], p)
    symmetry_gap = float(np.max(np.abs(d - d.T)))
    slack = min(
        d[i, k] + d[k, j] - d[i, j] for i, j, k in itertools.product(range(n), repeat=3)
    )
    identity = []
    for i, j in itertools.product(range(n), repeat=2):
        zero = d[i, j] < zero_tol
        equal = same_law(trees[i], trees[j])
        if zero != equal:
            identity.append(
                f"trees {i},{j}: distance {d[i, j]:.3e} but same law is {equal}"
            )
    passed = symmetry_gap <= tolerance and slack >= -tolerance and not identity
    return MetricAxiomReport(
        p=p,
        n_trees=n,
        tolerance=tolerance,
        distances=d.tolist(),
        symmetry_gap=symmetry_gap,
        triangle_slack=float(slack),
        identity_failures=identity,
        passed=passed,
    )
