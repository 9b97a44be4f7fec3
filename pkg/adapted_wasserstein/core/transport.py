"""Classical and weak optimal transport between finite laws."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from loguru import logger

from adapted_wasserstein.core.constants import (
    FRANK_WOLFE_GAP,
    FRANK_WOLFE_MAX_ITER,
    GRID_MAX_SUPPORT,
    MARGINAL_TOL,
)
from adapted_wasserstein.core.errors import InvalidInputError, SolverError
from adapted_wasserstein.core.scenario import (
    DiscreteDistribution,
    PathLaw,
    ScenarioTree,
    to_path_law,
)
from adapted_wasserstein.core.simplex import LinearProgram, solve_lp
from adapted_wasserstein.utils.file import write_csv

Law = Union[DiscreteDistribution, PathLaw]


def law_weights(law: Law) -> np.ndarray:
    if isinstance(law, DiscreteDistribution):
        return law.weights
    return law.probs


def _default_labels(law: Law) -> tuple[str, ...]:
    if isinstance(law, DiscreteDistribution):
        return tuple(repr(float(v)) for v in law.values)
    return tuple(str(i) for i in range(law.size))


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint weights between the atoms of two laws (rows = source)."""

    source: Law
    target: Law
    weights: np.ndarray
    row_labels: tuple[str, ...] = field(default=())
    col_labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        shape = (law_weights(self.source).size, law_weights(self.target).size)
        if w.shape != shape:
            raise InvalidInputError(f"coupling shape {w.shape}, expected {shape}")
        w = np.where(np.abs(w) < 1e-15, 0.0, w)
        object.__setattr__(self, "weights", w)
        if not self.row_labels:
            object.__setattr__(self, "row_labels", _default_labels(self.source))
        if not self.col_labels:
            object.__setattr__(self, "col_labels", _default_labels(self.target))

    def violations(self, tol: float = MARGINAL_TOL) -> list[str]:
        issues = []
        if np.any(self.weights < -tol):
            issues.append(f"negative weight {float(self.weights.min()):.3e}")
        rows = np.max(np.abs(self.weights.sum(axis=1) - law_weights(self.source)))
        cols = np.max(np.abs(self.weights.sum(axis=0) - law_weights(self.target)))
        if rows > tol:
            issues.append(f"row marginal off by {rows:.3e}")
        if cols > tol:
            issues.append(f"column marginal off by {cols:.3e}")
        return issues

    def expect(self, cost: np.ndarray) -> float:
        return float(np.sum(self.weights * cost))

    def dump_csv(self, path: Union[str, Path]) -> Path:
        """Write the weight matrix with labelled rows and columns."""
        rows = [
            (label, *(float(x) for x in row))
            for label, row in zip(self.row_labels, self.weights)
        ]
        return write_csv(rows, ("source", *self.col_labels), Path(path))


class TransportResult(NamedTuple):
    value: float
    coupling: Coupling
    # optimality gap of the p-th power cost; zero when solved exactly
    gap: float = 0.0


# ---------------------------------------------------------------------------
# Transport LP and one-dimensional couplings
# ---------------------------------------------------------------------------


def solve_transport(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact discrete OT: min <cost, gamma> over couplings of (a, b).

    The last column constraint is implied by the others and is dropped, so
    marginals that agree only within the global tolerance stay feasible.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.size, b.size
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (n, m):
        raise InvalidInputError(f"cost shape {cost.shape}, expected {(n, m)}")
    if n == 1 or m == 1:
        plan = b[None, :].copy() if n == 1 else a[:, None].copy()
        return float(np.sum(plan * cost)), plan
    a_eq = np.zeros((n + m - 1, n * m))
    for i in range(n):
        a_eq[i, i * m: (i + 1) * m] = 1.0
    for j in range(m - 1):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([a, b[:-1]])
    res = solve_lp(LinearProgram(c=cost.reshape(-1), a_eq=a_eq, b_eq=b_eq)).require_optimal(
        "transport problem"
    )
    plan = res.x.reshape(n, m)  # type: ignore[union-attr]
    return float(np.sum(plan * cost)), plan


def northwest_corner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """North-west corner plan of two weight vectors in the given order."""
    n, m = len(a), len(b)
    plan = np.zeros((n, m))
    ra, rb = np.array(a, dtype=float), np.array(b, dtype=float)
    i = j = 0
    while i < n and j < m:
        mass = min(ra[i], rb[j])
        plan[i, j] += mass
        ra[i] -= mass
        rb[j] -= mass
        if ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return plan


def sorted_plan(
    a: np.ndarray, x: np.ndarray, b: np.ndarray, y: np.ndarray, anti: bool = False
) -> np.ndarray:
    """Comonotone (or anti-comonotone) plan of weights a on x and b on y.

    Ties in values keep the input order.
    """
    ox = np.argsort(-np.asarray(x) if anti else np.asarray(x), kind="stable")
    oy = np.argsort(np.asarray(y), kind="stable")
    sub = northwest_corner(np.asarray(a)[ox], np.asarray(b)[oy])
    plan = np.zeros((len(a), len(b)))
    plan[np.ix_(ox, oy)] = sub
    return plan


def quantile_coupling(mu: DiscreteDistribution, nu: DiscreteDistribution) -> Coupling:
    """Monotone rearrangement; optimal for every convex cost of x - y."""
    return Coupling(mu, nu, sorted_plan(mu.weights, mu.values, nu.weights, nu.values))


# ---------------------------------------------------------------------------
# Wasserstein distance
# ---------------------------------------------------------------------------


def _check_p(p: float) -> None:
    if not p >= 1:
        raise InvalidInputError(f"p must be >= 1, got {p}")


def wasserstein(
    first: Union[Law, ScenarioTree], second: Union[Law, ScenarioTree], p: float = 1.0
) -> TransportResult:
    """W_p between two real laws (|x - y|) or two path laws (sup norm).

    Trees are replaced by their path laws.
    """
    _check_p(p)
    if isinstance(first, ScenarioTree):
        first = to_path_law(first)
    if isinstance(second, ScenarioTree):
        second = to_path_law(second)
    if isinstance(first, DiscreteDistribution) and isinstance(second, DiscreteDistribution):
        coupling = quantile_coupling(first, second)
        cost = np.abs(first.values[:, None] - second.values[None, :]) ** p
        return TransportResult(coupling.expect(cost) ** (1.0 / p), coupling)
    if isinstance(first, PathLaw) and isinstance(second, PathLaw):
        if first.horizon != second.horizon:
            raise InvalidInputError(
                f"horizon mismatch: {first.horizon} vs {second.horizon}"
            )
        dist = np.max(np.abs(first.paths[:, None, :] - second.paths[None, :, :]), axis=2)
        value, plan = solve_transport(first.probs, second.probs, dist**p)
        return TransportResult(max(value, 0.0) ** (1.0 / p), Coupling(first, second, plan))
    raise InvalidInputError("wasserstein needs two laws of the same kind")


# ---------------------------------------------------------------------------
# Weak transport with barycentric cost
# ---------------------------------------------------------------------------


def _check_weak_p(p: float) -> int:
    if p not in (1, 2):
        raise InvalidInputError(f"weak transport supports p in {{1, 2}}, got {p}")
    return int(p)


def weak_ot(
    mu: DiscreteDistribution, nu: DiscreteDistribution, p: float = 1
) -> TransportResult:
    """d_p^w(mu, nu) = inf_gamma (sum_i mu_i |x_i - bary_i(gamma)|^p)^{1/p}.

    p = 1 is solved as an LP with absolute-value auxiliaries, p = 2 with
    away-step Frank-Wolfe on the barycenter vector. When Frank-Wolfe does
    not certify its gap and both supports are small, the zooming grid
    search supplies the barycenters and an LP recovers a plan for them;
    the cheaper of the two plans is returned. `gap` carries the last
    certified Frank-Wolfe gap.
    """
    p = _check_weak_p(p)
    if p == 1:
        return _weak_ot_lp(mu, nu)
    result = _weak_ot_frank_wolfe(mu, nu)
    if result.gap < FRANK_WOLFE_GAP or max(mu.size, nu.size) > GRID_MAX_SUPPORT:
        return result
    _, bary = _grid_barycenters(mu, nu, 2)
    plan = _l1_barycentric_plan(mu, nu, mu.weights * bary)
    value = _barycentric_cost(mu, nu, plan, 2)
    logger.debug(f"weak_ot: grid fallback {value:.10g} against Frank-Wolfe {result.value:.10g}")
    if value < result.value:
        return TransportResult(value, Coupling(mu, nu, plan), result.gap)
    return result


def _weak_ot_lp(mu: DiscreteDistribution, nu: DiscreteDistribution) -> TransportResult:
    plan = _l1_barycentric_plan(mu, nu, mu.weights * mu.values)
    return TransportResult(_barycentric_cost(mu, nu, plan, 1), Coupling(mu, nu, plan))


def _l1_barycentric_plan(
    mu: DiscreteDistribution, nu: DiscreteDistribution, target: np.ndarray
) -> np.ndarray:
    """Coupling minimizing sum_i |target_i - sum_j gamma_ij y_j|."""
    n, m = mu.size, nu.size
    y = nu.values
    nv = n * m + n
    c = np.concatenate([np.zeros(n * m), np.ones(n)])
    a_eq = np.zeros((n + m - 1, nv))
    for i in range(n):
        a_eq[i, i * m: (i + 1) * m] = 1.0
    for j in range(m - 1):
        a_eq[n + j, j: n * m: m] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights[:-1]])
    a_ub = np.zeros((2 * n, nv))
    b_ub = np.zeros(2 * n)
    for i in range(n):
        # t_i >= +-(target_i - sum_j gamma_ij y_j)
        a_ub[2 * i, i * m: (i + 1) * m] = -y
        a_ub[2 * i, n * m + i] = -1.0
        b_ub[2 * i] = -target[i]
        a_ub[2 * i + 1, i * m: (i + 1) * m] = y
        a_ub[2 * i + 1, n * m + i] = -1.0
        b_ub[2 * i + 1] = target[i]
    res = solve_lp(LinearProgram(c=c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub))
    res.require_optimal("weak transport LP")
    return res.x[: n * m].reshape(n, m)  # type: ignore[index]


def _barycentric_cost(
    mu: DiscreteDistribution, nu: DiscreteDistribution, plan: np.ndarray, p: int
) -> float:
    bary = plan @ nu.values / mu.weights
    cost = float(np.dot(mu.weights, np.abs(mu.values - bary) ** p))
    return max(cost, 0.0) ** (1.0 / p)


def _weak_ot_frank_wolfe(
    mu: DiscreteDistribution,
    nu: DiscreteDistribution,
    gap_tol: float = FRANK_WOLFE_GAP,
    max_iter: int = FRANK_WOLFE_MAX_ITER,
) -> TransportResult:
    w, x, y = mu.weights, mu.values, nu.values
    target = w * x

    def objective(z: np.ndarray) -> float:
        return float(np.sum((target - z) ** 2 / w))

    def vertex(g: np.ndarray) -> np.ndarray:
        return sorted_plan(w, g, nu.weights, y, anti=True)

    start = sorted_plan(w, x, nu.weights, y)
    active: dict[bytes, list] = {start.tobytes(): [1.0, start, start @ y]}
    z = start @ y
    gap = np.inf
    for it in range(max_iter):
        g = 2.0 * (z / w - x)
        fw = vertex(g)
        z_fw = fw @ y
        gap = float(g @ (z - z_fw))
        if gap < gap_tol:
            break
        away_key = max(active, key=lambda k: float(g @ active[k][2]))
        lam_a, _, z_a = active[away_key]
        away_gap = float(g @ (z_a - z))
        if gap >= away_gap or lam_a >= 1.0:
            d, s_max, step_kind = z_fw - z, 1.0, "fw"
        else:
            d, s_max, step_kind = z - z_a, lam_a / (1.0 - lam_a), "away"
        curv = float(np.sum(d * d / w))
        if curv <= 0.0:
            break
        s = min(max(float(np.sum((target - z) * d / w)) / curv, 0.0), s_max)
        if step_kind == "fw":
            for entry in active.values():
                entry[0] *= 1.0 - s
            key = fw.tobytes()
            if key in active:
                active[key][0] += s
            else:
                active[key] = [s, fw, z_fw]
        else:
            for entry in active.values():
                entry[0] *= 1.0 + s
            active[away_key][0] -= s
        active = {k: v for k, v in active.items() if v[0] > 1e-15}
        z = sum(v[0] * v[2] for v in active.values())
    else:
        logger.warning(f"weak_ot: Frank-Wolfe stopped after {max_iter} iterations with gap {gap:.3e}")

    plan = sum(v[0] * v[1] for v in active.values())
    plan, z = _polish(active, target, w, y, plan, objective(z))
    logger.debug(f"weak_ot: Frank-Wolfe finished, {it} iterations, gap {gap:.2e}")
    return TransportResult(_barycentric_cost(mu, nu, plan, 2), Coupling(mu, nu, plan), max(gap, 0.0))


def _polish(
    active: dict[bytes, list],
    target: np.ndarray,
    w: np.ndarray,
    y: np.ndarray,
    plan: np.ndarray,
    current: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimize exactly over the affine hull of the active vertices.

    Accepted only when the weights stay nonnegative and the cost drops.
    """
    entries = list(active.values())
    k = len(entries)
    if k < 2:
        return plan, plan @ y
    Z = np.array([e[2] for e in entries])
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * (Z / w) @ Z.T
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([2.0 * (Z / w) @ target, [1.0]])
    lam = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
    if lam.min() < -1e-12:
        return plan, plan @ y
    lam = np.clip(lam, 0.0, None)
    lam /= lam.sum()
    z_new = lam @ Z
    if float(np.sum((target - z_new) ** 2 / w)) > current:
        return plan, plan @ y
    new_plan = sum(l * e[1] for l, e in zip(lam, entries))
    return new_plan, z_new


def convex_order_feasible(
    bary: np.ndarray, weights: np.ndarray, nu: DiscreteDistribution, tol: float = 1e-12
) -> np.ndarray:
    """Whether sum_i weights_i delta_{bary_i} precedes nu in convex order.

    `bary` may carry leading batch dimensions; the last axis runs over atoms.
    Equal means are assumed; call prices are compared at the atoms of nu,
    where the difference of the two call functions attains its maximum.
    """
    kinks = nu.values
    call_nu = np.maximum(kinks[:, None] - kinks[None, :], 0.0).T @ nu.weights
    calls = np.maximum(bary[..., None] - kinks, 0.0)
    call_b = np.einsum("...ik,i->...k", calls, weights)
    return np.all(call_b <= call_nu + tol, axis=-1)


def weak_ot_grid(
    mu: DiscreteDistribution,
    nu: DiscreteDistribution,
    p: float = 2,
    points: int = 21,
    rounds: int = 60,
) -> float:
    """Brute-force d_p^w by zooming grids over feasible barycenter vectors.

    The barycenters b are feasible exactly when sum_i mu_i delta_{b_i} is
    dominated by nu in convex order. The last coordinate is eliminated by
    the mean constraint. Supports are limited to a few atoms.
    """
    p = _check_weak_p(p)
    cost, _ = _grid_barycenters(mu, nu, p, points, rounds)
    return cost ** (1.0 / p)


def _grid_barycenters(
    mu: DiscreteDistribution,
    nu: DiscreteDistribution,
    p: int,
    points: int = 21,
    rounds: int = 60,
) -> tuple[float, np.ndarray]:
    """Best sum_i mu_i |x_i - b_i|^p found on the grids, with its b."""
    if mu.size > GRID_MAX_SUPPORT or nu.size > GRID_MAX_SUPPORT:
        raise InvalidInputError(f"grid search needs supports of at most {GRID_MAX_SUPPORT}")
    w, x = mu.weights, mu.values
    mean = nu.mean()
    lo, hi = float(nu.values.min()), float(nu.values.max())
    n = mu.size

    def complete(free: np.ndarray) -> np.ndarray:
        last = (mean - free @ w[:-1]) / w[-1]
        return np.concatenate([free, last[:, None]], axis=1)

    def evaluate(free: np.ndarray) -> np.ndarray:
        bary = complete(free)
        cost = np.abs(x - bary) ** p @ w
        ok = convex_order_feasible(bary, w, nu)
        return np.where(ok, cost, np.inf)

    if n == 1:
        return float(abs(x[0] - mean)) ** p, np.array([mean])

    centre = np.full(n - 1, mean)
    half = hi - lo
    best = np.inf
    for _ in range(rounds):
        axes = [np.linspace(max(c - half, lo), min(c + half, hi), points) for c in centre]
        grid = np.array(list(itertools.product(*axes)))
        cost = evaluate(grid)
        k = int(np.argmin(cost))
        if np.isfinite(cost[k]) and cost[k] <= best:
            best = float(cost[k])
            centre = grid[k]
        half *= 0.5
        if half < 1e-13 * max(1.0, hi - lo):
            break
    if not np.isfinite(best):
        raise SolverError("grid search found no feasible barycenter")
    return best, complete(centre[None, :])[0]


def convex_lipschitz_gap(
    mu: DiscreteDistribution,
    nu: DiscreteDistribution,
    lipschitz: float,
    rng: np.random.Generator,
    samples: int = 100,
    pieces: int = 4,
) -> float:
    """Largest int f dmu - int f dnu over random convex piecewise-linear f.

    Each f is a maximum of `pieces` affine maps with slopes in [-L, L] and
    kinks placed inside the joint support.
    """
    lo = float(min(mu.values.min(), nu.values.min()))
    hi = float(max(mu.values.max(), nu.values.max()))
    best = -np.inf
    for _ in range(samples):
        slopes = rng.uniform(-lipschitz, lipschitz, size=pieces)
        anchors = rng.uniform(lo, hi, size=pieces) if hi > lo else np.full(pieces, lo)
        offsets = -slopes * anchors + rng.normal(scale=0.1, size=pieces)

        def f(v: np.ndarray, s: np.ndarray = slopes, o: np.ndarray = offsets) -> np.ndarray:
            return np.max(np.outer(v, s) + o, axis=1)

        best = max(best, mu.expect(f) - nu.expect(f))
    return float(best)


def one_step_law(tree: ScenarioTree) -> DiscreteDistribution:
    """Law of X_1 for a one-period tree."""
    law = to_path_law(tree)
    return DiscreteDistribution.from_atoms(law.paths[:, -1], law.probs, normalize=True)

