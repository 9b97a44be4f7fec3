"""Strategies, claims, utilities and loss functions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from pydantic import ConfigDict, Field

from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.scenario import ScenarioTree, to_path_law
from adapted_wasserstein.utils.serde import SerdeMixin

BOUND_TOL = 1e-12

PathFn = Callable[[np.ndarray], np.ndarray]
ScalarFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Strategy:
    """Bounded predictable position per non-terminal node of one tree.

    `positions` has one entry per tree node; the entry of node u is held
    over (t, t+1] and leaf entries are zero.
    """

    tree: ScenarioTree
    k: float
    positions: np.ndarray

    def __post_init__(self) -> None:
        if not (np.isfinite(self.k) and self.k >= 0):
            raise InvalidInputError(f"strategy bound k must be finite and >= 0, got {self.k}")
        h = np.asarray(self.positions, dtype=float).reshape(-1)
        if h.size != len(self.tree.nodes):
            raise InvalidInputError(
                f"strategy has {h.size} positions for {len(self.tree.nodes)} nodes"
            )
        if not np.all(np.isfinite(h)):
            raise InvalidInputError("strategy positions must be finite")
        inner = list(self.tree.internal_nodes)
        worst = float(np.max(np.abs(h[inner]))) if inner else 0.0
        if worst > self.k + BOUND_TOL:
            raise InvalidInputError(f"position {worst:.6g} exceeds the bound k = {self.k}")
        h = np.clip(h, -self.k, self.k)
        leaves = [i for i, n in enumerate(self.tree.nodes) if not n.children]
        h[leaves] = 0.0
        h.setflags(write=False)
        object.__setattr__(self, "positions", h)

    @classmethod
    def zero(cls, tree: ScenarioTree, k: float = 0.0) -> "Strategy":
        return cls(tree, k, np.zeros(len(tree.nodes)))

    @classmethod
    def constant(cls, tree: ScenarioTree, k: float, value: float) -> "Strategy":
        return cls(tree, k, np.full(len(tree.nodes), float(value)))

    @classmethod
    def from_vector(cls, tree: ScenarioTree, k: float, h: np.ndarray) -> "Strategy":
        """From values ordered like `tree.internal_nodes`."""
        positions = np.zeros(len(tree.nodes))
        positions[list(tree.internal_nodes)] = h
        return cls(tree, k, positions)

    @classmethod
    def from_mapping(
        cls, tree: ScenarioTree, k: float, positions: Mapping[str, float]
    ) -> "Strategy":
        """From node id -> position; every non-terminal node must be present."""
        unknown = set(positions) - set(tree.index)
        if unknown:
            raise InvalidInputError(f"unknown node ids in strategy: {sorted(unknown)[:5]}")
        h = np.zeros(len(tree.nodes))
        for u in tree.internal_nodes:
            nid = tree.node_id(u)
            if nid not in positions:
                raise InvalidInputError(f"strategy undefined at non-terminal node '{nid}'")
            h[u] = float(positions[nid])
        return cls(tree, k, h)

    def vector(self) -> np.ndarray:
        return self.positions[list(self.tree.internal_nodes)]

    def to_mapping(self) -> dict[str, float]:
        return {self.tree.node_id(u): float(self.positions[u]) for u in self.tree.internal_nodes}

    def gains(self) -> np.ndarray:
        """(H . X)_T per leaf, in path-law order."""
        law = to_path_law(self.tree)
        held = self.positions[law.nodes[:, :-1]]
        return np.sum(held * np.diff(law.paths, axis=1), axis=1)

    def check_tree(self, tree: ScenarioTree) -> None:
        if tree is not self.tree and (
            len(tree.nodes) != len(self.tree.nodes)
            or any(a.id != b.id for a, b in zip(tree.nodes, self.tree.nodes))
        ):
            raise InvalidInputError("strategy is defined on a different tree")


class StrategyFile(SerdeMixin):
    """Strategy file: bound and position per non-terminal node id."""

    model_config = ConfigDict(extra="forbid")

    k: float = Field(ge=0)
    positions: dict[str, float]

    def to_strategy(self, tree: ScenarioTree) -> Strategy:
        return Strategy.from_mapping(tree, self.k, self.positions)

    @classmethod
    def from_strategy(cls, strategy: Strategy) -> "StrategyFile":
        return cls(k=strategy.k, positions=strategy.to_mapping())


PrefixFn = Callable[[int, np.ndarray], float]


@dataclass(frozen=True)
class PrefixStrategy:
    """Position as a function of the time-t path prefix, usable on any tree.

    `lipschitz` is the declared per-time Lipschitz constant in the prefix
    sup-norm; `certify` computes the observed one.
    """

    k: float
    fn: PrefixFn
    lipschitz: Optional[float] = None
    name: str = "prefix"

    def on_tree(self, tree: ScenarioTree) -> Strategy:
        h = np.zeros(len(tree.nodes))
        for u in tree.internal_nodes:
            h[u] = float(self.fn(tree.nodes[u].time, tree.prefix(u)))
        return Strategy(tree, self.k, h)

    def observed_lipschitz(self, trees: Sequence[ScenarioTree]) -> float:
        """Largest |h(a) - h(b)| / |a - b|_inf over prefix pairs of equal length."""
        by_time: dict[int, list[tuple[np.ndarray, float]]] = {}
        for tree in trees:
            for u in tree.internal_nodes:
                t = tree.nodes[u].time
                pre = tree.prefix(u)
                by_time.setdefault(t, []).append((pre, float(self.fn(t, pre))))
        worst = 0.0
        for items in by_time.values():
            for (a, ha), (b, hb) in itertools.combinations(items, 2):
                dist = float(np.max(np.abs(a - b)))
                if dist == 0.0:
                    if abs(ha - hb) > BOUND_TOL:
                        return float("inf")
                    continue
                worst = max(worst, abs(ha - hb) / dist)
        return worst

    def certify(self, trees: Sequence[ScenarioTree]) -> float:
        """Lipschitz constant to use in bounds.

        Raises:
            InvalidInputError: the strategy is not Lipschitz on these prefixes
                or exceeds its declared constant.
        """
        observed = self.observed_lipschitz(trees)
        if not np.isfinite(observed):
            raise InvalidInputError(f"strategy '{self.name}' is not a function of the prefix")
        if self.lipschitz is None:
            return observed
        if observed > self.lipschitz + 1e-12:
            raise InvalidInputError(
                f"strategy '{self.name}' has Lipschitz constant {observed:.6g} "
                f"above the declared {self.lipschitz:.6g}"
            )
        return float(self.lipschitz)


def linear_prefix_strategy(
    k: float, intercepts: Sequence[float], slopes: Sequence[float]
) -> PrefixStrategy:
    """h(t, prefix) = clip(a_t + b_t x_t, -k, k); Lipschitz constant max |b_t|."""
    a = np.asarray(intercepts, dtype=float)
    b = np.asarray(slopes, dtype=float)

    def fn(t: int, prefix: np.ndarray) -> float:
        return float(np.clip(a[t] + b[t] * prefix[-1], -k, k))

    return PrefixStrategy(k, fn, float(np.max(np.abs(b))) if b.size else 0.0, "linear")


def sign_strategy(k: float, start: int = 1) -> PrefixStrategy:
    """h_t = k sign(x_t) from time `start` on, 0 before; not Lipschitz."""

    def fn(t: int, prefix: np.ndarray) -> float:
        return float(k * np.sign(prefix[-1])) if t >= start else 0.0

    return PrefixStrategy(k, fn, None, "sign")


# ---------------------------------------------------------------------------
# Claims
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Claim:
    """Path-dependent payoff with a declared sup-norm Lipschitz constant.

    `terminal` is set when the payoff depends on X_T only; it maps terminal
    values to payoffs and lets lattice solvers use the claim.
    """

    payoff: PathFn
    lipschitz: float
    name: str = "claim"
    terminal: Optional[ScalarFn] = None

    def __post_init__(self) -> None:
        if not self.lipschitz >= 0:
            raise InvalidInputError(f"Lipschitz constant must be >= 0, got {self.lipschitz}")

    def evaluate(self, tree: ScenarioTree) -> np.ndarray:
        """Payoff per leaf, in path-law order."""
        paths = to_path_law(tree).paths
        return np.asarray(self.payoff(paths), dtype=float).reshape(paths.shape[0])

    def shifted(self, c: float) -> "Claim":
        base = self.terminal

        def terminal(v: np.ndarray) -> np.ndarray:
            return base(v) + c  # type: ignore[misc]

        return Claim(
            lambda paths: self.payoff(paths) + c,
            self.lipschitz,
            f"{self.name}{c:+g}",
            terminal if base is not None else None,
        )

    def observed_lipschitz(self, trees: Sequence[ScenarioTree]) -> float:
        paths = np.vstack([to_path_law(t).paths for t in trees])
        values = np.asarray(self.payoff(paths), dtype=float)
        dist = np.max(np.abs(paths[:, None, :] - paths[None, :, :]), axis=2)
        gaps = np.abs(values[:, None] - values[None, :])
        off = dist > 0
        if np.any(gaps[~off] > BOUND_TOL):
            raise InvalidInputError(f"claim '{self.name}' is not a function of the path")
        return float(np.max(gaps[off] / dist[off])) if np.any(off) else 0.0

    def check_lipschitz(self, trees: Sequence[ScenarioTree], tol: float = 1e-9) -> float:
        """Exhaustive pair check of the declared constant over the trees' leaves."""
        observed = self.observed_lipschitz(trees)
        if observed > self.lipschitz + tol:
            raise InvalidInputError(
                f"claim '{self.name}' has Lipschitz constant {observed:.6g} "
                f"above the declared {self.lipschitz:.6g}"
            )
        return observed


def call_claim(strike: float = 0.0) -> Claim:
    """(x_T - K)^+ with L = 1."""
    return Claim(
        payoff=lambda paths: np.maximum(paths[:, -1] - strike, 0.0),
        lipschitz=1.0,
        name=f"call({strike:g})",
        terminal=lambda v: np.maximum(v - strike, 0.0),
    )


def constant_claim(c: float) -> Claim:
    return Claim(
        payoff=lambda paths: np.full(paths.shape[0], float(c)),
        lipschitz=0.0,
        name=f"constant({c:g})",
        terminal=lambda v: np.full(np.shape(v), float(c)),
    )


def tent_claim(center: float = 0.0, height: float = 1.0) -> Claim:
    """max(height - |x_T - center|, 0) with L = 1."""

    def terminal(v: np.ndarray) -> np.ndarray:
        return np.maximum(height - np.abs(np.asarray(v, dtype=float) - center), 0.0)

    return Claim(
        payoff=lambda paths: terminal(paths[:, -1]),
        lipschitz=1.0,
        name=f"tent({center:g}, {height:g})",
        terminal=terminal,
    )


def affine_max_claim(intercepts: Sequence[float], coefficients: Sequence[Sequence[float]]) -> Claim:
    """max_j (a_j + b_j . path); sup-norm Lipschitz constant max_j |b_j|_1."""
    a = np.asarray(intercepts, dtype=float)
    b = np.atleast_2d(np.asarray(coefficients, dtype=float))
    if b.shape[0] != a.size:
        raise InvalidInputError("need one coefficient row per intercept")
    return Claim(
        payoff=lambda paths: np.max(paths @ b.T + a, axis=1),
        lipschitz=float(np.max(np.sum(np.abs(b), axis=1))),
        name="affine_max",
    )


# ---------------------------------------------------------------------------
# Utilities and losses
# ---------------------------------------------------------------------------


def _grid(lo: float = -10.0, hi: float = 10.0, n: int = 2001) -> np.ndarray:
    return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class UtilitySpec:
    """Concave increasing utility with left derivative and growth bound.

    The growth bound reads U'(x) <= c (1 + |x|^(p-1)). `pieces` holds
    (slope, intercept) pairs when U is a minimum of affine maps.
    """

    name: str
    u: ScalarFn
    du: ScalarFn
    growth_c: float
    growth_p: float
    strictly_increasing: bool = True
    pieces: tuple[tuple[float, float], ...] = field(default=())

    @property
    def piecewise_linear(self) -> bool:
        return bool(self.pieces)

    def violations(self, grid: Optional[np.ndarray] = None, tol: float = 1e-10) -> list[str]:
        x = _grid() if grid is None else np.asarray(grid, dtype=float)
        ux, dux = self.u(x), self.du(x)
        scale = 1.0 + float(np.max(np.abs(ux)))
        issues = []
        if np.any(np.diff(ux) < -tol * scale):
            issues.append("not increasing")
        if np.any(np.diff(ux, 2) > tol * scale):
            issues.append("not concave")
        if np.any(dux < -tol):
            issues.append("negative derivative")
        if np.any(np.diff(dux) > tol * (1.0 + float(np.max(np.abs(dux))))):
            issues.append("derivative not non-increasing")
        bound = self.growth_c * (1.0 + np.abs(x) ** (self.growth_p - 1.0))
        if np.any(dux > bound + tol):
            issues.append("growth bound violated")
        if self.pieces:
            slopes = np.array([s for s, _ in self.pieces])
            intercepts = np.array([c for _, c in self.pieces])
            envelope = np.min(np.multiply.outer(x, slopes) + intercepts, axis=-1)
            if np.any(np.abs(envelope - ux) > tol * scale):
                issues.append("pieces do not match u")
        return issues

    def ensure_valid(self) -> "UtilitySpec":
        issues = self.violations()
        if issues:
            raise InvalidInputError(f"utility '{self.name}': " + ", ".join(issues))
        return self


def linear_capped(cap: float = 5.0) -> UtilitySpec:
    """U(x) = min(x, cap)."""
    return UtilitySpec(
        name=f"min(x, {cap:g})",
        u=lambda x: np.minimum(x, cap),
        du=lambda x: np.where(np.asarray(x) <= cap, 1.0, 0.0),
        growth_c=1.0,
        growth_p=1.0,
        strictly_increasing=False,
        pieces=((1.0, 0.0), (0.0, float(cap))),
    )


def capped_exponential(a: float = 1.0, floor: float = -5.0) -> UtilitySpec:
    """(1 - e^{-a x}) / a above `floor`, continued linearly below it."""
    if a <= 0:
        raise InvalidInputError(f"risk aversion must be > 0, got {a}")
    slope = float(np.exp(-a * floor))
    level = (1.0 - slope) / a

    def u(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x >= floor, (1.0 - np.exp(-a * np.maximum(x, floor))) / a, level + slope * (x - floor))

    def du(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.exp(-a * np.maximum(x, floor))

    return UtilitySpec(f"exp({a:g}) floor {floor:g}", u, du, growth_c=slope, growth_p=1.0)


def linear_utility() -> UtilitySpec:
    return UtilitySpec(
        "linear",
        lambda x: np.asarray(x, dtype=float),
        lambda x: np.ones_like(np.asarray(x, dtype=float)),
        1.0,
        1.0,
        pieces=((1.0, 0.0),),
    )


@dataclass(frozen=True)
class LossSpec:
    """Convex increasing loss; `pieces` holds (slope, intercept) pairs when
    the loss is a maximum of affine maps."""

    name: str
    loss: ScalarFn
    dloss: ScalarFn
    growth_c: float
    growth_p: float
    pieces: tuple[tuple[float, float], ...] = field(default=())

    @property
    def piecewise_linear(self) -> bool:
        return bool(self.pieces)

    @property
    def max_slope(self) -> float:
        if not self.pieces:
            raise InvalidInputError(f"loss '{self.name}' is not piecewise linear")
        return max(s for s, _ in self.pieces)

    def violations(self, grid: Optional[np.ndarray] = None, tol: float = 1e-10) -> list[str]:
        x = _grid() if grid is None else np.asarray(grid, dtype=float)
        lx = self.loss(x)
        scale = 1.0 + float(np.max(np.abs(lx)))
        issues = []
        if np.any(lx < -tol):
            issues.append("negative values")
        if np.any(np.diff(lx) < -tol * scale):
            issues.append("not increasing")
        # strictly increasing once it leaves its floor value
        rising = np.flatnonzero(lx > lx[0] + tol * scale)
        if rising.size == 0 or np.any(np.diff(lx[rising[0] - 1 :]) <= 0.0):
            issues.append("not strictly increasing")
        if np.any(np.diff(lx, 2) < -tol * scale):
            issues.append("not convex")
        if self.pieces and any(s < 0 for s, _ in self.pieces):
            issues.append("negative slope")
        return issues

    def ensure_valid(self) -> "LossSpec":
        issues = self.violations()
        if issues:
            raise InvalidInputError(f"loss '{self.name}': " + ", ".join(issues))
        return self


def piecewise_linear_loss(pieces: Sequence[tuple[float, float]], name: str = "piecewise") -> LossSpec:
    """l(x) = max_j (s_j x + c_j)."""
    if not pieces:
        raise InvalidInputError("need at least one affine piece")
    s = np.array([p[0] for p in pieces], dtype=float)
    c = np.array([p[1] for p in pieces], dtype=float)

    def loss(x: np.ndarray) -> np.ndarray:
        return np.max(np.multiply.outer(np.asarray(x, dtype=float), s) + c, axis=-1)

    def dloss(x: np.ndarray) -> np.ndarray:
        vals = np.multiply.outer(np.asarray(x, dtype=float), s) + c
        return s[np.argmax(vals, axis=-1)]

    return LossSpec(name, loss, dloss, float(s.max()), 1.0, tuple((float(a), float(b)) for a, b in pieces))


def positive_part() -> LossSpec:
    return piecewise_linear_loss([(0.0, 0.0), (1.0, 0.0)], "positive_part")


def avar_loss(alpha: float) -> LossSpec:
    """x^+ / alpha; its OCE is AVaR_alpha."""
    if not 0 < alpha <= 1:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    return piecewise_linear_loss([(0.0, 0.0), (1.0 / alpha, 0.0)], f"avar({alpha:g})")


def exponential_loss(a: float = 1.0) -> LossSpec:
    """e^{a x} / a; its OCE is the entropic risk shifted by 1/a."""
    if a <= 0:
        raise InvalidInputError(f"a must be > 0, got {a}")
    return LossSpec(
        f"exp({a:g})",
        lambda x: np.exp(a * np.asarray(x, dtype=float)) / a,
        lambda x: np.exp(a * np.asarray(x, dtype=float)),
        growth_c=1.0,
        growth_p=float("inf"),
    )
