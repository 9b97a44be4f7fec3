"""Transfer of a strategy across a bi-causal coupling.

G_t(y) = E_pi[H_t(X) | Y passes y at t]. Bi-causality makes this the
conditional expectation given the whole Y path as well, so the gains of G
equal E_pi[(H(X).Y)_T | Y] leaf by leaf.
"""

from __future__ import annotations

import numpy as np
from loguru import logger

from adapted_wasserstein.core.bicausal import BiCausalCoupling
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.hedging.specs import Strategy
from adapted_wasserstein.core.scenario import ScenarioTree

MASS_TOL = 1e-15


def _held_positions(strategy: Strategy) -> np.ndarray:
    """Position held over (t, t+1] per P-leaf row and time."""
    law = strategy.tree.path_law
    return strategy.positions[law.nodes[:, :-1]]


def project_strategy(
    strategy: Strategy, coupling: BiCausalCoupling, tree_q: ScenarioTree
) -> Strategy:
    """Project H on the coupling's P tree to G on `tree_q`.

    Raises:
        InvalidInputError: the coupling belongs to other trees, or carries no
            mass through a node of `tree_q`.
    """
    strategy.check_tree(coupling.tree_p)
    if tree_q is not coupling.tree_q and tree_q != coupling.tree_q:
        raise InvalidInputError("coupling was built for a different Q tree")
    law_q = coupling.law_q
    weights = coupling.weights
    held = _held_positions(strategy)
    g = np.zeros(len(tree_q.nodes))
    for t in range(tree_q.horizon):
        # sum_w pi(w, eta) H_t(w) per Q-leaf eta
        weighted = held[:, t] @ weights
        for v in tree_q.levels[t]:
            through = law_q.nodes[:, t] == v
            mass = float(weights[:, through].sum())
            if mass <= MASS_TOL:
                raise InvalidInputError(
                    f"coupling carries no mass through node '{tree_q.node_id(v)}'"
                )
            g[v] = float(weighted[through].sum()) / mass
    logger.debug(f"project_strategy: {len(tree_q.internal_nodes)} positions on Q")
    return Strategy(tree_q, strategy.k, np.clip(g, -strategy.k, strategy.k))


def projection_identity_gap(
    strategy: Strategy, projected: Strategy, coupling: BiCausalCoupling
) -> float:
    """max over Q-leaves of |(G.Y)_T - E_pi[(H(X).Y)_T | Y]|."""
    law_q = coupling.law_q
    held = _held_positions(strategy)
    q_mass = coupling.weights.sum(axis=0)
    if np.any(q_mass <= MASS_TOL):
        raise InvalidInputError("coupling carries no mass on some Q-leaf")
    conditional = (held.T @ coupling.weights) / q_mass
    steps = np.diff(law_q.paths, axis=1)
    expected_gains = np.sum(conditional.T * steps, axis=1)
    return float(np.max(np.abs(projected.gains() - expected_gains)))
