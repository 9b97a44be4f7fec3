"""Recombining binomial lattices.

Step n of a lattice with N steps holds n + 1 states indexed by the number of
up moves j. From (n, j) the process moves down to (n + 1, j) or up to
(n + 1, j + 1) with probability `up_prob[n][j]`. Lattices cover sizes far
beyond what a scenario tree can store; `to_tree` expands small ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterator, NamedTuple, Sequence

import numpy as np
from loguru import logger

from adapted_wasserstein.core.constants import MAX_TREE_LEAVES
from adapted_wasserstein.core.errors import InvalidInputError, ProblemSizeError
from adapted_wasserstein.core.scenario import DiscreteDistribution, ScenarioTree

MAX_SYNC_STATES = 2_000_000


@dataclass(frozen=True, eq=False)
class BinomialLattice:
    """Values per (step, state) and up-move probabilities per non-terminal state."""

    values: tuple[np.ndarray, ...]
    up_prob: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        values = tuple(np.asarray(v, dtype=float).reshape(-1) for v in self.values)
        probs = tuple(np.asarray(q, dtype=float).reshape(-1) for q in self.up_prob)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "up_prob", probs)
        issues = self.validate()
        if issues:
            raise InvalidInputError("invalid lattice: " + "; ".join(issues[:5]))

    @classmethod
    def from_arrays(
        cls, values: Sequence[Sequence[float]], up_prob: Sequence[Sequence[float]]
    ) -> "BinomialLattice":
        return cls(tuple(np.asarray(v) for v in values), tuple(np.asarray(q) for q in up_prob))

    @property
    def steps(self) -> int:
        return len(self.values) - 1

    @property
    def root_value(self) -> float:
        return float(self.values[0][0])

    def validate(self) -> list[str]:
        issues = []
        if len(self.values) < 2:
            return ["lattice needs at least one step"]
        if len(self.up_prob) != len(self.values) - 1:
            issues.append("need one probability row per non-terminal step")
        for n, v in enumerate(self.values):
            if v.size != n + 1:
                issues.append(f"step {n}: {v.size} states, expected {n + 1}")
            if not np.all(np.isfinite(v)):
                issues.append(f"step {n}: non-finite values")
        for n, q in enumerate(self.up_prob):
            if q.size != n + 1:
                issues.append(f"step {n}: {q.size} probabilities, expected {n + 1}")
            elif np.any(q < 0.0) or np.any(q > 1.0) or not np.all(np.isfinite(q)):
                issues.append(f"step {n}: up probabilities outside [0, 1]")
        return issues

    def drift(self, n: int) -> np.ndarray:
        """E[X_{n+1} - X_n | state] for every state at step n."""
        q = self.up_prob[n]
        nxt = self.values[n + 1]
        return q * nxt[1:] + (1.0 - q) * nxt[:-1] - self.values[n]

    def is_martingale(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, max(float(np.max(np.abs(v))) for v in self.values))
        return all(
            float(np.max(np.abs(self.drift(n)))) <= tol * scale for n in range(self.steps)
        )

    def state_probs(self) -> list[np.ndarray]:
        """Marginal probability of every state, step by step."""
        out = [np.ones(1)]
        for q in self.up_prob:
            prev = out[-1]
            nxt = np.zeros(prev.size + 1)
            nxt[:-1] += prev * (1.0 - q)
            nxt[1:] += prev * q
            out.append(nxt)
        return out

    def terminal_law(self) -> DiscreteDistribution:
        return DiscreteDistribution.from_atoms(
            self.values[-1], self.state_probs()[-1], normalize=True
        )

    def to_tree(self, max_leaves: int = MAX_TREE_LEAVES) -> ScenarioTree:
        """Expand into a (non-recombining) scenario tree.

        Raises:
            ProblemSizeError: the expansion would exceed `max_leaves` leaves.
        """
        if 2**self.steps > max_leaves:
            raise ProblemSizeError(
                f"expanding {self.steps} lattice steps needs {2**self.steps} leaves "
                f"(limit {max_leaves})"
            )

        def build(n: int, j: int) -> dict[str, Any]:
            node: dict[str, Any] = {"value": float(self.values[n][j]), "children": []}
            if n == self.steps:
                return node
            q = float(self.up_prob[n][j])
            for prob, jj in ((1.0 - q, j), (q, j + 1)):
                if prob > 0.0:
                    child = build(n + 1, jj)
                    child["prob"] = prob
                    node["children"].append(child)
            return node

        return ScenarioTree.from_nested({"horizon": self.steps, "root": build(0, 0)})


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def random_walk_lattice(
    steps: int, sigma: float, root: float = 0.0, drift: float = 0.0, horizon: float = 1.0
) -> BinomialLattice:
    """Walk on [0, horizon] with increments drift*dt +- sigma*sqrt(dt), each 1/2."""
    if steps < 1:
        raise InvalidInputError(f"steps must be >= 1, got {steps}")
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    dt = horizon / steps
    values = tuple(
        root + n * drift * dt + (2.0 * np.arange(n + 1) - n) * sigma * np.sqrt(dt)
        for n in range(steps + 1)
    )
    return BinomialLattice(values, tuple(np.full(n + 1, 0.5) for n in range(steps)))


def gbm_lattice(steps: int, sigma: float, horizon: float = 1.0) -> BinomialLattice:
    """Martingale binomial model of dZ = sigma Z dB, Z_0 = 1.

    Factors u, d = 1 +- sigma*sqrt(dt) with q = 1/2, so q*u + (1-q)*d = 1
    exactly and the one-step log-variance is sigma^2 dt to first order.
    """
    if steps < 1:
        raise InvalidInputError(f"steps must be >= 1, got {steps}")
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    move = sigma * np.sqrt(horizon / steps)
    if move >= 1.0:
        raise InvalidInputError(
            f"sigma*sqrt(dt) = {move:.3f} >= 1 makes the down factor non-positive"
        )
    up, down = 1.0 + move, 1.0 - move
    values = tuple(
        up ** np.arange(n + 1) * down ** (n - np.arange(n + 1)) for n in range(steps + 1)
    )
    return BinomialLattice(values, tuple(np.full(n + 1, 0.5) for n in range(steps)))


# ---------------------------------------------------------------------------
# Replication
# ---------------------------------------------------------------------------


class Replication(NamedTuple):
    """Backward-induction price and hedge ratio per state."""

    price: float
    values: list[np.ndarray]
    delta: list[np.ndarray]


def replicate(
    lattice: BinomialLattice, payoff: Callable[[np.ndarray], np.ndarray]
) -> Replication:
    """Conditional expectations of a terminal payoff and their hedge ratios.

    On a martingale lattice the price plus the delta-hedge gains reproduce
    the payoff in every state.
    """
    v = np.asarray(payoff(lattice.values[-1]), dtype=float)
    values = [v]
    deltas: list[np.ndarray] = []
    for n in range(lattice.steps - 1, -1, -1):
        q = lattice.up_prob[n]
        nxt = lattice.values[n + 1]
        spread = nxt[1:] - nxt[:-1]
        diff = v[1:] - v[:-1]
        delta = np.divide(diff, spread, out=np.zeros_like(diff), where=spread != 0.0)
        v = q * v[1:] + (1.0 - q) * v[:-1]
        values.append(v)
        deltas.append(delta)
    values.reverse()
    deltas.reverse()
    return Replication(float(values[0][0]), values, deltas)


# ---------------------------------------------------------------------------
# Synchronous coupling on the product lattice
# ---------------------------------------------------------------------------


class SynchronousCost(NamedTuple):
    expected_cost: float
    value: float


def _ordered_children(lattice: BinomialLattice, n: int) -> tuple[np.ndarray, ...]:
    """(low value, high value, low mass, low index offset) per state at step n."""
    q = lattice.up_prob[n]
    nxt = lattice.values[n + 1]
    down, up = nxt[:-1], nxt[1:]
    swap = up < down
    low = np.where(swap, up, down)
    high = np.where(swap, down, up)
    low_mass = np.where(swap, q, 1.0 - q)
    low_off = swap.astype(int)
    return low, high, low_mass, low_off


def _comonotone_pairs(
    pl: np.ndarray, ql: np.ndarray
) -> list[tuple[int, int, np.ndarray]]:
    """Comonotone coupling of two 2-point laws given their low masses.

    Returns (P side, Q side, mass) with side 0 = low child, 1 = high child.
    """
    ph, qh = 1.0 - pl, 1.0 - ql
    return [
        (0, 0, np.minimum(pl, ql)),
        (1, 1, np.minimum(ph, qh)),
        (0, 1, np.maximum(pl - ql, 0.0)),
        (1, 0, np.maximum(ql - pl, 0.0)),
    ]


def synchronous_cost(
    first: BinomialLattice, second: BinomialLattice, p: float = 2.0
) -> SynchronousCost:
    """Expected AW_p cost of the stepwise comonotone coupling of two lattices.

    The coupling is bi-causal, so the result bounds AW_p from above. For two
    martingale lattices at p = 2 the cost is stage additive and is summed
    over the product lattice directly; otherwise the joint law of the
    accumulated quadratic variation and drift variation is propagated.
    """
    if not p >= 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")
    if first.steps != second.steps:
        raise InvalidInputError(f"step mismatch: {first.steps} vs {second.steps}")
    if p == 2 and first.is_martingale() and second.is_martingale():
        total = _additive_quadratic(first, second)
    else:
        total = _propagated_cost(first, second, p)
    return SynchronousCost(total, max(total, 0.0) ** (1.0 / p))


def _step_terms(
    first: BinomialLattice, second: BinomialLattice, n: int
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Per-transition martingale and drift differences on the product grid."""
    a_p, a_q = first.drift(n), second.drift(n)
    lo_p, hi_p, pl, off_p = _ordered_children(first, n)
    lo_q, hi_q, ql, off_q = _ordered_children(second, n)
    x, y = first.values[n], second.values[n]
    child_p = (lo_p, hi_p)
    child_q = (lo_q, hi_q)
    for sp, sq, mass in _comonotone_pairs(pl[:, None], ql[None, :]):
        dm_p = (child_p[sp] - x - a_p)[:, None]
        dm_q = (child_q[sq] - y - a_q)[None, :]
        jp = np.arange(x.size) + (off_p if sp == 0 else 1 - off_p)
        jq = np.arange(y.size) + (off_q if sq == 0 else 1 - off_q)
        yield mass, dm_p - dm_q, a_p[:, None] - a_q[None, :], jp, jq


def _additive_quadratic(first: BinomialLattice, second: BinomialLattice) -> float:
    mass = np.ones((1, 1))
    total = (first.root_value - second.root_value) ** 2
    for n in range(first.steps):
        nxt = np.zeros((n + 2, n + 2))
        for lam, dm, _, jp, jq in _step_terms(first, second, n):
            w = mass * lam
            total += float(np.sum(w * dm**2))
            np.add.at(nxt, (jp[:, None], jq[None, :]), w)
        mass = nxt
    logger.debug(f"synchronous_cost: additive path over {first.steps} steps")
    return total


def _propagated_cost(first: BinomialLattice, second: BinomialLattice, p: float) -> float:
    # state: (j, k, quadratic variation, drift variation) -> mass
    start = abs(first.root_value - second.root_value)
    states: dict[tuple[int, int, float, float], float] = {(0, 0, 0.0, start): 1.0}
    for n in range(first.steps):
        terms = list(_step_terms(first, second, n))
        nxt: dict[tuple[int, int, float, float], float] = {}
        for (j, k, qv, var1), m in states.items():
            for lam, dm, da, jp, jq in terms:
                w = m * float(lam[j, k])
                if w <= 0.0:
                    continue
                key = (
                    int(jp[j]),
                    int(jq[k]),
                    round(qv + float(dm[j, k]) ** 2, 12),
                    round(var1 + abs(float(da[j, k])), 12),
                )
                nxt[key] = nxt.get(key, 0.0) + w
        if len(nxt) > MAX_SYNC_STATES:
            raise ProblemSizeError(
                f"synchronous cost needs {len(nxt)} joint states at step {n + 1}"
            )
        states = nxt
    logger.debug(f"synchronous_cost: {len(states)} terminal joint states")
    return float(
        sum(m * (qv ** (p / 2.0) + var1**p) for (_, _, qv, var1), m in states.items())
    )

