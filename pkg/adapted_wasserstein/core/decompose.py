"""Doob decomposition X = M + A on scenario trees and the AW path functionals.

Drift increments live on non-terminal nodes, martingale increments on edges
(stored at the child). Quadratic variation uses the realized convention
[M]_T = sum_t (dM_t)^2 along each path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ConfigDict, Field, model_validator

from adapted_wasserstein.core.constants import (
    BDG_B1,
    BDG_B2,
    QV_CONVENTION,
)
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.scenario import (
    ScenarioTree,
    check_same_horizon,
    ensure_valid,
    to_path_law,
)
from adapted_wasserstein.utils.file import write_csv
from adapted_wasserstein.utils.serde import SerdeMixin


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Per-node Doob increments of the canonical process on a tree.

    Attributes:
        tree: The decomposed tree.
        drift: `drift[u]` = E[X_{t+1} - X_t | u] for non-terminal u, NaN at leaves.
        martingale: `martingale[c]` = (x_c - x_u) - drift[u] for the edge into
            c; 0 at the root.
    """

    tree: ScenarioTree
    drift: np.ndarray
    martingale: np.ndarray

    @cached_property
    def path_increments(self) -> tuple[np.ndarray, np.ndarray]:
        """(dM, dA), each of shape (leaves, T), in path-law order."""
        nodes = to_path_law(self.tree).nodes
        dm = self.martingale[nodes[:, 1:]]
        da = self.drift[nodes[:, :-1]]
        return dm, da

    @property
    def quadratic_variation(self) -> np.ndarray:
        dm, _ = self.path_increments
        return np.sum(dm**2, axis=1)

    @property
    def first_variation(self) -> np.ndarray:
        _, da = self.path_increments
        return np.sum(np.abs(da), axis=1)

    def is_martingale(self, tol: float = 1e-12) -> bool:
        inner = self.drift[list(self.tree.internal_nodes)]
        scale = max(1.0, float(np.max(np.abs(self.tree.values))))
        return bool(np.all(np.abs(inner) <= tol * scale))

    def violations(self, tol: float = 1e-10) -> list[str]:
        """Check the martingale property and X = M + A edge by edge."""
        issues = []
        values = self.tree.values
        for u in self.tree.internal_nodes:
            node = self.tree.nodes[u]
            kids = list(node.children)
            mean_dm = float(np.dot(node.probs, self.martingale[kids]))
            if abs(mean_dm) > tol:
                issues.append(f"node '{node.id}': E[dM] = {mean_dm:.3e}")
            recon = self.martingale[kids] + self.drift[u] - (values[kids] - values[u])
            scale = 1.0 + float(np.max(np.abs(values[kids] - values[u])))
            if np.max(np.abs(recon)) > 1e-12 * scale:
                issues.append(f"node '{node.id}': dM + dA != dX")
        return issues

    def rows(self) -> list[tuple[str, str, str, int, float, float]]:
        """Flat records (kind, node, parent, t, delta_a, delta_m) for CSV dumps."""
        out = []
        for i, node in enumerate(self.tree.nodes):
            if node.children:
                out.append(("node", node.id, "", node.time, float(self.drift[i]), math.nan))
            if node.parent is not None:
                parent = self.tree.nodes[node.parent].id
                out.append(
                    ("edge", node.id, parent, node.time, math.nan, float(self.martingale[i]))
                )
        return out


def doob_decompose(tree: ScenarioTree) -> Decomposition:
    """Doob decomposition of the canonical process under the tree's law."""
    ensure_valid(tree)
    values = tree.values
    n = len(tree.nodes)
    drift = np.full(n, np.nan)
    martingale = np.zeros(n)
    for u in tree.internal_nodes:
        node = tree.nodes[u]
        kids = list(node.children)
        steps = values[kids] - values[u]
        drift[u] = float(np.dot(node.probs, steps))
        martingale[kids] = steps - drift[u]
    drift.setflags(write=False)
    martingale.setflags(write=False)
    return Decomposition(tree=tree, drift=drift, martingale=martingale)


def seminorm(tree: ScenarioTree, p: float) -> float:
    """AW_p distance to the constant path at the root value.

    E[[M]_T^{p/2} + |A|_{1-var}^p]^{1/p} under the realized convention.
    """
    return distance_to_constant(tree, p, tree.root.value)


def distance_to_constant(tree: ScenarioTree, p: float, level: float = 0.0) -> float:
    """AW_p distance to the deterministic path constant at `level`.

    The root offset |x_0 - level| enters the 1-variation term.
    """
    if not p >= 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")
    dec = doob_decompose(tree)
    law = to_path_law(tree)
    offset = abs(tree.root.value - level)
    terms = dec.quadratic_variation ** (p / 2.0) + (offset + dec.first_variation) ** p
    return float(np.dot(law.probs, terms) ** (1.0 / p))


def _leaf_row(tree: ScenarioTree, path: Union[int, str]) -> int:
    law = to_path_law(tree)
    if isinstance(path, str):
        if path not in tree.index:
            raise InvalidInputError(f"unknown node id '{path}'")
        node = tree.index[path]
        rows = np.nonzero(law.nodes[:, -1] == node)[0]
        if rows.size == 0:
            raise InvalidInputError(f"node '{path}' is not a leaf")
        return int(rows[0])
    if not 0 <= path < law.size:
        raise InvalidInputError(f"path index {path} out of range 0..{law.size - 1}")
    return int(path)


def pair_increments(
    tree_p: ScenarioTree,
    tree_q: ScenarioTree,
    path_p: Union[int, str],
    path_q: Union[int, str],
    dec_p: Optional[Decomposition] = None,
    dec_q: Optional[Decomposition] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step (dM^X - dM^Y, dA^X - dA^Y) along a pair of leaf paths.

    Paths are given as row indices of the path laws or as leaf node ids.
    Decompositions are computed under each marginal and may be passed in
    to avoid recomputation.
    """
    check_same_horizon(tree_p, tree_q)
    dec_p = dec_p or doob_decompose(tree_p)
    dec_q = dec_q or doob_decompose(tree_q)
    i, j = _leaf_row(tree_p, path_p), _leaf_row(tree_q, path_q)
    dm_p, da_p = dec_p.path_increments
    dm_q, da_q = dec_q.path_increments
    return dm_p[i] - dm_q[j], da_p[i] - da_q[j]


def dump_csv(dec: Decomposition, path: Union[str, Path]) -> Path:
    """Write the decomposition as CSV for debugging."""
    return write_csv(
        dec.rows(), ("kind", "node_id", "parent_id", "t", "delta_a", "delta_m"), Path(path)
    )


class ConstantsLedger(SerdeMixin):
    """BDG constants and the derived bound constants used by one check.

    A fresh ledger is created per verification so derived values never leak
    across inputs; `derived` records every constant actually used.
    """

    model_config = ConfigDict(extra="forbid")

    b_1: float = BDG_B1
    b_2: float = BDG_B2
    p: float = 1.0
    qv_convention: str = QV_CONVENTION
    derived: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _fixed_constants(self) -> "ConstantsLedger":
        if self.b_1 != BDG_B1 or self.b_2 != BDG_B2:
            raise ValueError(f"b_1 and b_2 are fixed at {BDG_B1} and {BDG_B2}")
        self.bdg(self.p)
        return self

    @staticmethod
    def bdg(p: float) -> float:
        """Upper BDG constant b_p for p = 1 or p >= 2."""
        if p == 1:
            return BDG_B1
        if p == 2:
            return BDG_B2
        if p > 2:
            return float(p)
        raise InvalidInputError(f"no BDG constant fixed for p = {p}")

    @property
    def b_p(self) -> float:
        return self.bdg(self.p)

    def record(self, name: str, value: float) -> float:
        self.derived[name] = float(value)
        return float(value)

    def beta(self, lip_tilde: float, aw2_p0: float, aw2_q0: float) -> float:
        """2*sqrt(2)*b_1*L~*min(AW_2(P, delta_0), AW_2(Q, delta_0))."""
        value = 2.0 * math.sqrt(2.0) * self.b_1 * lip_tilde * min(aw2_p0, aw2_q0)
        return self.record("beta", value)

    def integral_alpha(
        self, lip_tilde: float, aw2p_p0: float, aw2p_q0: float
    ) -> float:
        """2^{3p-2} L~^p b_p b_{2p}^{1/2} min(AW_2p(P,d0)^p, AW_2p(Q,d0)^p)."""
        p = self.p
        value = (
            2.0 ** (3 * p - 2)
            * lip_tilde**p
            * self.b_p
            * math.sqrt(self.bdg(2 * p))
            * min(aw2p_p0**p, aw2p_q0**p)
        )
        return self.record("integral_alpha", value)

    def r(self, lipschitz: float, k: float, alpha: float) -> float:
        """b_1 (L + k) / alpha."""
        return self.record("r", self.b_1 * (lipschitz + k) / alpha)

    def c_p(self) -> float:
        """Constant of E[[M]^{p/2}] <= c_p E|M_T|^p, equal to 1 at p = 2."""
        p = self.p
        if p <= 1:
            raise InvalidInputError("c_p needs p > 1")
        p_star = max(p, p / (p - 1.0))
        return self.record("c_p", (p_star - 1.0) ** p)

    def contraction(self, k: float, lipschitz: float) -> float:
        """2^{(p-1)/p} b_p^{1/p} (k + L)."""
        p = self.p
        value = 2.0 ** ((p - 1) / p) * self.b_p ** (1 / p) * (k + lipschitz)
        return self.record("contraction", value)

