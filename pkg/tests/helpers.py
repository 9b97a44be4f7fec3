"""Helpers shared by the tests."""

from typing import Any, Sequence

from adapted_wasserstein.core.scenario import ScenarioTree


def tree_from_paths(paths: Sequence[Sequence[float]], probs: Sequence[float]) -> ScenarioTree:
    """Tree whose leaves are `paths` (all starting at the same root value).

    Paths sharing a prefix share the nodes along it.
    """
    horizon = len(paths[0]) - 1

    def build(rows: list[int], t: int) -> dict[str, Any]:
        spec: dict[str, Any] = {"value": float(paths[rows[0]][t]), "children": []}
        if t == horizon:
            return spec
        mass = sum(probs[r] for r in rows)
        groups: dict[float, list[int]] = {}
        for r in rows:
            groups.setdefault(float(paths[r][t + 1]), []).append(r)
        for sub in groups.values():
            child = build(sub, t + 1)
            child["prob"] = sum(probs[r] for r in sub) / mass
            spec["children"].append(child)
        return spec

    return ScenarioTree.from_nested({"horizon": horizon, "root": build(list(range(len(paths))), 0)})


def binomial_walk(sigmas: Sequence[float], root: float = 0.0) -> ScenarioTree:
    """Symmetric walk with step n moving +-sigmas[n], each with probability 1/2."""

    def kernel(t: int, prefix: tuple[float, ...]) -> list[tuple[float, float]]:
        x = prefix[-1]
        return [(0.5, x - sigmas[t]), (0.5, x + sigmas[t])]

    return ScenarioTree.from_kernel(len(sigmas), root, kernel)
