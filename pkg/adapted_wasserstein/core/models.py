"""Model zoo: quantized diffusions, counterexample pairs and random instances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from adapted_wasserstein.core.constants import MAX_TREE_LEAVES
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.core.hedging.specs import (
    Claim,
    PrefixStrategy,
    Strategy,
    affine_max_claim,
    linear_prefix_strategy,
)
from adapted_wasserstein.core.lattice import gbm_lattice
from adapted_wasserstein.core.scenario import DiscreteDistribution, ScenarioTree

Coefficient = Callable[[int, float], float]
QUANTIZATIONS = ("binomial", "gauss-hermite")


def _zero(n: int, x: float) -> float:
    return 0.0


@dataclass(frozen=True)
class VolatilitySchedule:
    """sigma(n, x) and mu(n, x) per step index n and current value x."""

    sigma: Coefficient
    mu: Coefficient = _zero
    name: str = "schedule"

    @classmethod
    def constant(cls, sigma: float, mu: float = 0.0) -> "VolatilitySchedule":
        return cls(lambda n, x: sigma, lambda n, x: mu, f"constant({sigma:g}, {mu:g})")

    @classmethod
    def from_steps(
        cls, sigmas: Sequence[float], mus: Optional[Sequence[float]] = None
    ) -> "VolatilitySchedule":
        """Piecewise-constant coefficients, one entry per step."""
        s = [float(v) for v in sigmas]
        m = [float(v) for v in mus] if mus is not None else [0.0] * len(s)
        if len(m) != len(s):
            raise InvalidInputError("need as many drifts as volatilities")
        return cls(lambda n, x: s[n], lambda n, x: m[n], "steps")

    def coefficients(self, n: int, x: float) -> tuple[float, float]:
        """(sigma, mu) at step n, state x; raises on invalid values."""
        sigma, mu = float(self.sigma(n, x)), float(self.mu(n, x))
        if not (math.isfinite(sigma) and sigma >= 0.0):
            raise InvalidInputError(f"{self.name}: sigma({n}, {x:g}) = {sigma} must be finite and >= 0")
        if not math.isfinite(mu):
            raise InvalidInputError(f"{self.name}: mu({n}, {x:g}) = {mu} is not finite")
        return sigma, mu


def _shocks(quantization: str, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Standardized shock nodes and weights: mean 0, variance 1."""
    if quantization == "binomial":
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    if quantization == "gauss-hermite":
        if points < 2:
            raise InvalidInputError(f"gauss-hermite needs at least 2 points, got {points}")
        nodes, weights = hermegauss(points)
        return nodes, weights / math.sqrt(2.0 * math.pi)
    raise InvalidInputError(f"unknown quantization '{quantization}', expected one of {QUANTIZATIONS}")


def _steps_tree(
    steps: int,
    schedule: VolatilitySchedule,
    quantization: str,
    points: int,
    horizon: float,
    root: float,
    with_drift: bool,
) -> ScenarioTree:
    if steps < 1:
        raise InvalidInputError(f"N must be >= 1, got {steps}")
    z, w = _shocks(quantization, points)
    dt = horizon / steps

    def kernel(t: int, prefix: tuple[float, ...]) -> list[tuple[float, float]]:
        x = prefix[-1]
        sigma, mu = schedule.coefficients(t, x)
        drift = mu * dt if with_drift else 0.0
        return [(float(p), x + drift + sigma * math.sqrt(dt) * float(s)) for p, s in zip(w, z)]

    return ScenarioTree.from_kernel(steps, root, kernel, max_leaves=MAX_TREE_LEAVES)


def random_walk_tree(
    steps: int,
    schedule: VolatilitySchedule,
    quantization: str = "binomial",
    points: int = 3,
    horizon: float = 1.0,
    root: float = 0.0,
) -> ScenarioTree:
    """Martingale walk on [0, horizon] with increments of variance sigma_n^2 dt.

    Binomial steps are +- sigma sqrt(dt); gauss-hermite uses `points`-point
    quadrature of the Gaussian increment. The drift of the schedule is ignored.
    """
    return _steps_tree(steps, schedule, quantization, points, horizon, root, with_drift=False)


def drift_diffusion_tree(
    steps: int,
    schedule: VolatilitySchedule,
    horizon: float = 1.0,
    root: float = 0.0,
) -> ScenarioTree:
    """Euler tree: dX = mu dt +- sigma sqrt(dt), each 1/2; the Doob drift is mu dt."""
    return _steps_tree(steps, schedule, "binomial", 2, horizon, root, with_drift=True)


def gbm_tree(steps: int, sigma: float, horizon: float = 1.0) -> ScenarioTree:
    """Binomial martingale model of dZ = sigma Z dB, Z_0 = 1, expanded to a tree."""
    return gbm_lattice(steps, sigma, horizon).to_tree()


def scaling_formula(sigmas: Sequence[float], sigmas_hat: Sequence[float], horizon: float = 1.0) -> float:
    """(sum_n dt |sigma_n - sigma'_n|^2)^{1/2}, the AW_2 of two binomial walks."""
    a, b = np.asarray(sigmas, dtype=float), np.asarray(sigmas_hat, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError("schedules must have the same number of steps")
    return float(math.sqrt(np.sum((a - b) ** 2) * horizon / a.size))


def gbm_target(sigma1: float, sigma2: float, horizon: float = 1.0) -> float:
    """e^{s1^2 T} - 2 e^{s1 s2 T} + e^{s2^2 T}: squared AW_2 of two GBMs."""
    return (
        math.exp(sigma1**2 * horizon)
        - 2.0 * math.exp(sigma1 * sigma2 * horizon)
        + math.exp(sigma2**2 * horizon)
    )


# ---------------------------------------------------------------------------
# Counterexamples
# ---------------------------------------------------------------------------


def _two_period(root: float, branches: Sequence[tuple[float, float, Sequence[tuple[float, float]]]]) -> ScenarioTree:
    """Tree from (prob, x_1, [(prob, x_2), ...]) branches."""
    return ScenarioTree.from_nested(
        {
            "horizon": 2,
            "root": {
                "value": root,
                "children": [
                    {
                        "prob": p1,
                        "value": x1,
                        "children": [{"prob": p2, "value": x2, "children": []} for p2, x2 in tail],
                    }
                    for p1, x1, tail in branches
                ],
            },
        }
    )


def information_split(delta: float = 0.1) -> tuple[ScenarioTree, ScenarioTree]:
    """Flat-then-split versus split-by-delta-then-split.

    Both trees end in 2 or 0 with probability 1/2; in the second the first
    move already reveals which. Close in W_1, far in AW_1.
    """
    flat = _two_period(1.0, [(1.0, 1.0, [(0.5, 2.0), (0.5, 0.0)])])
    split = _two_period(1.0, [(0.5, 1.0 + delta, [(1.0, 2.0)]), (0.5, 1.0 - delta, [(1.0, 0.0)])])
    return flat, split


def sign_arbitrage(n: int = 100) -> tuple[ScenarioTree, ScenarioTree]:
    """P_n (first move +-1/n, then to {1, 0} or {0, -1}) and its W_1 limit P."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    e = 1.0 / n
    p_n = _two_period(0.0, [(0.5, e, [(0.5, 1.0), (0.5, 0.0)]), (0.5, -e, [(0.5, 0.0), (0.5, -1.0)])])
    p = _two_period(0.0, [(1.0, 0.0, [(0.25, 1.0), (0.5, 0.0), (0.25, -1.0)])])
    return p_n, p


def sign_gap_limit(utility: Callable[[np.ndarray], np.ndarray], k: float) -> float:
    """(U(k) - U(0)) / 2, the limit of the sign strategy's utility gap."""
    return 0.5 * float(utility(np.array(k)) - utility(np.array(0.0)))


def superhedge_jump(n: int = 100) -> tuple[ScenarioTree, ScenarioTree]:
    """One period: P_n puts mass 1/n at 0 besides +-1; P is the fair coin on +-1."""
    if n < 2:
        raise InvalidInputError(f"n must be >= 2, got {n}")
    side = 0.5 - 0.5 / n
    leaves = [(side, -1.0), (1.0 / n, 0.0), (side, 1.0)]
    p_n = ScenarioTree.from_kernel(1, 0.0, lambda t, prefix: leaves)
    p = ScenarioTree.from_kernel(1, 0.0, lambda t, prefix: [(0.5, -1.0), (0.5, 1.0)])
    return p_n, p


def unbounded_leverage(eps: float = 0.01) -> tuple[ScenarioTree, ScenarioTree]:
    """One period: (1 - eps) at +eps, eps at -eps, against the constant path."""
    if not 0.0 < eps < 1.0:
        raise InvalidInputError(f"eps must lie in (0, 1), got {eps}")
    p_eps = ScenarioTree.from_nested(
        {
            "horizon": 1,
            "root": {
                "value": 0.0,
                "children": [
                    {"prob": 1.0 - eps, "value": eps, "children": []},
                    {"prob": eps, "value": -eps, "children": []},
                ],
            },
        }
    )
    flat = ScenarioTree.from_nested(
        {"horizon": 1, "root": {"value": 0.0, "children": [{"prob": 1.0, "value": 0.0, "children": []}]}}
    )
    return p_eps, flat


def leverage_avar(eps: float, alpha: float, k: float) -> float:
    """AVaR_alpha(-(H.X)) of the long position k on unbounded_leverage(eps), for eps < alpha."""
    return k * eps * (2.0 * eps - alpha) / alpha


def hidden_sign(eps: float = 0.01) -> tuple[ScenarioTree, ScenarioTree]:
    """P_eps: x_1 = +-eps, x_2 = +-1 independent; P: x_1 = 0, x_2 = +-1.

    AW_2(P_eps, P) = eps sqrt(2), yet k sign(x_1) earns k on P_eps and
    nothing on P.
    """
    tail = [(0.5, 1.0), (0.5, -1.0)]
    p_eps = _two_period(0.0, [(0.5, eps, tail), (0.5, -eps, tail)])
    p = _two_period(0.0, [(1.0, 0.0, tail)])
    return p_eps, p


def two_drift(
    steps: int, mu1: float, mu2: float, sigma: float = 1.0, horizon: float = 1.0
) -> tuple[ScenarioTree, ScenarioTree]:
    """Same volatility, different constant drifts; AW_1 = T |mu1 - mu2|."""
    return (
        drift_diffusion_tree(steps, VolatilitySchedule.constant(sigma, mu1), horizon),
        drift_diffusion_tree(steps, VolatilitySchedule.constant(sigma, mu2), horizon),
    )


def sign_drift(c: float = 1.0, sigma: float = 0.25) -> tuple[ScenarioTree, ScenarioTree]:
    """Two periods of +-sigma noise; the second step drifts by +c sign(x_1) in P
    and by -c sign(x_1) in Q.

    The synchronous coupling costs (2c)^p, the coupling that flips the noise
    costs (8 sigma^2)^{p/2}.
    """
    if sigma <= 0.0:
        raise InvalidInputError(f"sigma must be > 0, got {sigma}")

    def tree(sign: float) -> ScenarioTree:
        def kernel(t: int, prefix: tuple[float, ...]) -> list[tuple[float, float]]:
            x = prefix[-1]
            drift = sign * c * math.copysign(1.0, x) if t == 1 else 0.0
            return [(0.5, x + drift - sigma), (0.5, x + drift + sigma)]

        return ScenarioTree.from_kernel(2, 0.0, kernel)

    return tree(1.0), tree(-1.0)


def counterexample_suite(
    n: int = 100, eps: float = 0.01, delta: float = 0.1
) -> dict[str, tuple[ScenarioTree, ScenarioTree]]:
    return {
        "information_split": information_split(delta),
        "sign_arbitrage": sign_arbitrage(n),
        "superhedge_jump": superhedge_jump(n),
        "unbounded_leverage": unbounded_leverage(eps),
        "hidden_sign": hidden_sign(eps),
        "two_drift": two_drift(4, 0.0, 1.0),
        "sign_drift": sign_drift(),
    }


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def random_tree(
    rng: np.random.Generator,
    horizon: int = 2,
    max_children: int = 3,
    root: float = 0.0,
    scale: float = 1.0,
    martingale: bool = False,
) -> ScenarioTree:
    """Tree with 1..max_children children per node, Dirichlet probabilities
    and Gaussian moves; `martingale` re-centres every node's moves."""
    if max_children < 1:
        raise InvalidInputError(f"max_children must be >= 1, got {max_children}")

    def kernel(t: int, prefix: tuple[float, ...]) -> list[tuple[float, float]]:
        count = int(rng.integers(1, max_children + 1))
        probs = rng.dirichlet(np.ones(count))
        moves = scale * rng.standard_normal(count)
        if martingale:
            moves = moves - float(np.dot(probs, moves))
        return [(float(p), prefix[-1] + float(m)) for p, m in zip(probs, moves)]

    return ScenarioTree.from_kernel(horizon, root, kernel)


def random_affine_claim(
    rng: np.random.Generator, horizon: int, pieces: int = 3, scale: float = 1.0
) -> Claim:
    """max_j (a_j + b_j . path) with Gaussian coefficients."""
    return affine_max_claim(
        scale * rng.standard_normal(pieces),
        rng.standard_normal((pieces, horizon + 1)) / (horizon + 1),
    )


def random_strategy(rng: np.random.Generator, tree: ScenarioTree, k: float) -> Strategy:
    return Strategy(tree, k, rng.uniform(-k, k, size=len(tree.nodes)))


def random_prefix_strategy(rng: np.random.Generator, horizon: int, k: float) -> PrefixStrategy:
    return linear_prefix_strategy(
        k, rng.uniform(-k, k, size=horizon), rng.uniform(-1.0, 1.0, size=horizon)
    )


def random_distribution(
    rng: np.random.Generator, max_size: int = 4, scale: float = 1.0
) -> DiscreteDistribution:
    size = int(rng.integers(1, max_size + 1))
    return DiscreteDistribution(scale * rng.standard_normal(size), rng.dirichlet(np.ones(size)))
