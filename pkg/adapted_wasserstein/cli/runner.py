"""CLI runner: dispatch a RunConfig, write artifacts, map failures to exit codes."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from adapted_wasserstein.cli.configuration import RunConfig, load_theme
from adapted_wasserstein.core.bicausal import (
    adapted_wasserstein_dp,
    adapted_wasserstein_lp,
    check_metric_axioms,
    stage_cost_for,
    synchronous_value,
)
from adapted_wasserstein.core.constants import EXACT_TOL, QV_CONVENTION
from adapted_wasserstein.core.decompose import doob_decompose, seminorm
from adapted_wasserstein.core.errors import InvalidInputError, SolverError
from adapted_wasserstein.core.experiments import (
    collapse_suite,
    counterexample_report,
    gbm_converges,
    gbm_suite,
    metric_suite,
    reports_frame,
    scaling_suite,
    verifier_suite,
)
from adapted_wasserstein.core.hedging import (
    Strategy,
    StrategyFile,
    VerificationReport,
    call_tightness,
    expected_loss_hedge,
    indifference_price,
    optimal_avar_hedge,
    project_strategy,
    projection_identity_gap,
    utility_maximize,
    verify_avar_lipschitz,
    verify_contraction,
    verify_oce_stability,
    verify_shi,
    verify_whi,
)
from adapted_wasserstein.core.hedging.specs import (
    Claim,
    LossSpec,
    UtilitySpec,
    avar_loss,
    call_claim,
    capped_exponential,
    constant_claim,
    exponential_loss,
    linear_capped,
    linear_prefix_strategy,
    linear_utility,
    positive_part,
    tent_claim,
)
from adapted_wasserstein.core.models import (
    VolatilitySchedule,
    counterexample_suite,
    drift_diffusion_tree,
    gbm_tree,
    random_walk_tree,
)
from adapted_wasserstein.core.scenario import (
    DiscreteDistribution,
    ScenarioTree,
    load_law,
    load_tree,
    save_tree,
    terminal_law,
)
from adapted_wasserstein.core.transport import Coupling, wasserstein, weak_ot
from adapted_wasserstein.utils.file import unique_fpath, write_frame
from adapted_wasserstein.utils.plotting import plot_convergence, plot_slack

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2
EXIT_FAILED = 3

PAIR_CHECKS = ("whi", "shi", "avar", "contraction", "oce")


@dataclass
class Outcome:
    """What a subcommand produced.

    `record` is the JSON artifact, `table` the CSV one; `summary` is what
    the console shows.
    """

    title: str
    record: dict[str, Any]
    summary: dict[str, Any]
    table: Optional[pd.DataFrame] = None
    passed: bool = True
    plot: Optional[Callable[[Path], Path]] = None
    files: list[Path] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Builders shared by the handlers
# ---------------------------------------------------------------------------


def _claim(cfg: RunConfig) -> Claim:
    if cfg.claim == "call":
        return call_claim(cfg.strike)
    if cfg.claim == "tent":
        return tent_claim(center=cfg.strike)
    return constant_claim(0.0)


def _loss(cfg: RunConfig) -> LossSpec:
    if cfg.loss == "exponential":
        return exponential_loss(cfg.risk_aversion)
    if cfg.loss == "avar":
        return avar_loss(cfg.alpha)
    return positive_part()


def _utility(cfg: RunConfig) -> UtilitySpec:
    if cfg.utility == "capped_exponential":
        return capped_exponential(cfg.risk_aversion)
    if cfg.utility == "linear":
        return linear_utility()
    return linear_capped(cfg.cap)


def _trees(cfg: RunConfig) -> list[ScenarioTree]:
    return [load_tree(path) for path in cfg.inputs]


def _strategy(cfg: RunConfig, tree: ScenarioTree) -> Strategy:
    if cfg.strategy is None:
        return Strategy.zero(tree, cfg.k)
    return StrategyFile.load_json(cfg.strategy).to_strategy(tree)


def _coupling_frame(coupling: Coupling) -> pd.DataFrame:
    rows = [
        (src, dst, float(w))
        for src, row in zip(coupling.row_labels, coupling.weights)
        for dst, w in zip(coupling.col_labels, row)
        if w > 0.0
    ]
    return pd.DataFrame(rows, columns=["source", "target", "weight"])


def _strategy_frame(strategy: Strategy) -> pd.DataFrame:
    return pd.DataFrame(
        sorted(strategy.to_mapping().items()), columns=["node_id", "position"]
    )


def _report_outcome(report: VerificationReport) -> Outcome:
    frame = pd.DataFrame(
        sorted({"lhs": report.lhs, "rhs": report.rhs, "slack": report.slack, **report.terms}.items()),
        columns=["quantity", "value"],
    )
    return Outcome(
        title=f"verify {report.check}",
        record=report.model_dump(mode="json"),
        summary={"lhs": report.lhs, "rhs": report.rhs, "slack": report.slack, **report.terms},
        table=frame,
        passed=report.passed,
    )


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def _dist(cfg: RunConfig) -> Outcome:
    tree_p, tree_q = _trees(cfg)
    if cfg.method == "lp":
        value, coupling, expected = adapted_wasserstein_lp(tree_p, tree_q, cfg.p)
        cost_name = "aw"
    elif cfg.method == "dp":
        stage = stage_cost_for(cfg.stage_cost, cfg.p)
        value, expected, coupling = adapted_wasserstein_dp(tree_p, tree_q, stage)
        cost_name = stage.name
    else:
        value, coupling, expected = synchronous_value(tree_p, tree_q, cfg.p)
        cost_name = "aw"
    record = {
        "command": "dist",
        "method": cfg.method,
        "cost": cost_name,
        "p": cfg.p,
        "value": value,
        "expected_cost": expected,
        "upper_bound_only": cfg.method == "sync",
        "qv_convention": QV_CONVENTION,
        "leaf_pairs": int(coupling.weights.size),
        "coupling_violations": coupling.violations(),
    }
    return Outcome(
        title=f"AW_{cfg.p:g} ({cfg.method})",
        record=record,
        summary={"value": value, "expected cost": expected, "method": cfg.method},
        table=_coupling_frame(coupling.as_coupling()),
    )


def _wass(cfg: RunConfig) -> Outcome:
    first, second = (load_law(path) for path in cfg.inputs)
    res = wasserstein(first, second, cfg.p)
    value, coupling = res.value, res.coupling
    kind = "paths" if isinstance(first, ScenarioTree) else "line"
    return Outcome(
        title=f"W_{cfg.p:g}",
        record={"command": "wass", "p": cfg.p, "kind": kind, "value": value},
        summary={"value": value, "kind": kind},
        table=_coupling_frame(coupling),
    )


def _as_distribution(law: Any) -> DiscreteDistribution:
    return terminal_law(law) if isinstance(law, ScenarioTree) else law


def _weak(cfg: RunConfig) -> Outcome:
    mu, nu = (_as_distribution(load_law(path)) for path in cfg.inputs)
    value, coupling, gap = weak_ot(mu, nu, cfg.p)
    plain = wasserstein(mu, nu, cfg.p).value
    return Outcome(
        title=f"d_{cfg.p:g}^w",
        record={"command": "weak", "p": cfg.p, "value": value, "gap": gap, "wasserstein": plain},
        summary={"weak": value, "wasserstein": plain},
        table=_coupling_frame(coupling),
    )


def _seminorm(cfg: RunConfig) -> Outcome:
    (tree,) = _trees(cfg)
    value = seminorm(tree, cfg.p)
    dec = doob_decompose(tree)
    return Outcome(
        title=f"AW_{cfg.p:g} to the constant path",
        record={
            "command": "seminorm",
            "p": cfg.p,
            "value": value,
            "martingale": dec.is_martingale(),
            "qv_convention": QV_CONVENTION,
        },
        summary={"value": value, "martingale": dec.is_martingale()},
        table=pd.DataFrame(
            dec.rows(), columns=["kind", "node_id", "parent_id", "t", "delta_a", "delta_m"]
        ),
    )


def _project(cfg: RunConfig) -> Outcome:
    if cfg.strategy is None:
        raise InvalidInputError("'project' needs --strategy")
    tree_p, tree_q = _trees(cfg)
    held = _strategy(cfg, tree_p)
    aw = adapted_wasserstein_lp(tree_p, tree_q, cfg.p)
    projected = project_strategy(held, aw.coupling, tree_q)
    gap = projection_identity_gap(held, projected, aw.coupling)
    return Outcome(
        title="projected strategy",
        record={
            "command": "project",
            "p": cfg.p,
            "aw": aw.value,
            "identity_gap": gap,
            "strategy": StrategyFile.from_strategy(projected).model_dump(mode="json"),
        },
        summary={"aw": aw.value, "identity gap": gap, "max |G|": float(np.max(np.abs(projected.positions)))},
        table=_strategy_frame(projected),
    )


# ---------------------------------------------------------------------------
# Hedging
# ---------------------------------------------------------------------------


def _hedge(cfg: RunConfig) -> Outcome:
    (tree,) = _trees(cfg)
    claim = _claim(cfg)
    if cfg.action == "indiff":
        price = indifference_price(tree, claim, cfg.k, _utility(cfg), tol=cfg.tolerance)
        return Outcome(
            title="indifference price",
            record={"command": "hedge", "action": "indiff", "claim": claim.name, "value": price},
            summary={"price": price, "claim": claim.name},
            table=pd.DataFrame([("price", price)], columns=["quantity", "value"]),
        )
    if cfg.action == "avar":
        result = optimal_avar_hedge(tree, claim, cfg.k, cfg.alpha)
    elif cfg.action == "loss":
        result = expected_loss_hedge(tree, claim, cfg.k, cfg.m, _loss(cfg))
    else:
        result = utility_maximize(tree, claim, cfg.k, _utility(cfg))
    record = {
        "command": "hedge",
        "action": cfg.action,
        "claim": claim.name,
        "k": cfg.k,
        "value": result.value,
        "m": result.m,
        "method": result.method,
        "meta": result.meta,
        "strategy": result.strategy.to_mapping() if result.strategy is not None else {},
    }
    return Outcome(
        title=f"hedge {cfg.action}",
        record=record,
        summary={"value": result.value, "m": result.m, "method": result.method},
        table=_strategy_frame(result.strategy) if result.strategy is not None else None,
    )


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def _verify_pair(cfg: RunConfig) -> VerificationReport:
    if len(cfg.inputs) != 2:
        raise InvalidInputError(f"'verify {cfg.action}' on files needs 2 trees, got {len(cfg.inputs)}")
    tree_p, tree_q = _trees(cfg)
    claim = _claim(cfg)
    prefix = linear_prefix_strategy(
        cfg.k, [0.0] * tree_p.horizon, [cfg.slope] * tree_p.horizon
    )
    if cfg.action == "whi":
        return verify_whi(tree_p, tree_q, _strategy(cfg, tree_p), claim, cfg.m, cfg.k, cfg.tolerance)
    if cfg.action == "shi":
        return verify_shi(tree_p, tree_q, prefix, claim, cfg.m, cfg.k, cfg.tolerance)
    if cfg.action == "avar":
        return verify_avar_lipschitz(tree_p, tree_q, claim, cfg.k, cfg.alpha, prefix, cfg.tolerance)
    if cfg.action == "contraction":
        return verify_contraction(
            tree_p, tree_q, _strategy(cfg, tree_p), claim, cfg.k, cfg.p, prefix, cfg.tolerance
        )
    return verify_oce_stability(tree_p, tree_q, claim, cfg.k, _loss(cfg), cfg.tolerance)


def _suite_outcome(cfg: RunConfig, reports: list[VerificationReport]) -> Outcome:
    table = reports_frame(reports)
    failed = int((~table["passed"]).sum())
    min_slack = float(table["slack"].min())
    return Outcome(
        title=f"verify {cfg.action} suite",
        record={
            "command": "verify",
            "action": cfg.action,
            "seed": cfg.seed,
            "instances": cfg.instances,
            "failed": failed,
            "min_slack": min_slack,
            "reports": [r.model_dump(mode="json") for r in reports],
        },
        summary={"instances": cfg.instances, "failed": failed, "min slack": min_slack},
        table=table,
        passed=failed == 0,
        plot=lambda path: plot_slack(table["slack"], path, title=f"{cfg.action} slack"),
    )


def _verify(cfg: RunConfig) -> Outcome:
    action = cfg.action
    if action == "avar" and cfg.model == "call":
        report = call_tightness(
            cfg.sigma[0], cfg.sigma_hat[0], cfg.steps[0], cfg.k, cfg.alpha, cfg.horizon
        )
        return _report_outcome(report)
    if action in PAIR_CHECKS:
        if cfg.inputs:
            return _report_outcome(_verify_pair(cfg))
        reports = verifier_suite(
            action,
            cfg.instances,
            cfg.seed,
            cfg.workers,
            horizon=cfg.depth,
            max_children=cfg.max_children,
            k=cfg.k,
            alpha=cfg.alpha,
            p=cfg.p,
        )
        return _suite_outcome(cfg, reports)
    if action == "metric":
        return _verify_metric(cfg)
    if action == "scaling":
        if cfg.method == "sync":
            raise InvalidInputError("'verify scaling' compares the lp or dp value")
        table = scaling_suite(cfg.steps, cfg.pairs, cfg.seed, cfg.method, cfg.workers)
        worst = float(table["error"].max())
        return Outcome(
            title="random-walk scaling identity",
            record={"command": "verify", "action": "scaling", "max_error": worst, "rows": table.to_dict("records")},
            summary={"instances": len(table), "max error": worst},
            table=table,
            passed=worst <= EXACT_TOL,
        )
    if action == "gbm":
        table = gbm_suite(cfg.sigma[0], cfg.sigma_hat[0], cfg.steps, cfg.horizon, cfg.workers)
        passed = gbm_converges(table, cfg.rel_tol)
        return Outcome(
            title="GBM closed form",
            record={
                "command": "verify",
                "action": "gbm",
                "target": float(table["target"].iloc[0]),
                "rows": table.to_dict("records"),
                "converges": passed,
            },
            summary={"target": float(table["target"].iloc[0]), "finest rel error": float(table["rel_error"].iloc[-1])},
            table=table,
            passed=passed,
            plot=lambda path: plot_convergence(table, path),
        )
    if action == "collapse":
        table = collapse_suite(cfg.seed, cfg.instances, cfg.p, cfg.max_children, cfg.workers)
        worst = float(table["error"].max())
        return Outcome(
            title="one-period collapse",
            record={"command": "verify", "action": "collapse", "max_error": worst, "rows": table.to_dict("records")},
            summary={"instances": len(table), "max error": worst},
            table=table,
            passed=worst <= EXACT_TOL,
        )
    report = counterexample_report(cfg.n, cfg.eps, cfg.delta, cfg.k, cfg.alpha, cfg.cap)
    rows = [
        (name, quantity, value)
        for name, values in sorted(report.items.items())
        for quantity, value in sorted(values.items())
    ]
    return Outcome(
        title="counterexamples",
        record=report.model_dump(mode="json"),
        summary={name: ok for name, ok in sorted(report.checks.items())},
        table=pd.DataFrame(rows, columns=["item", "quantity", "value"]),
        passed=report.passed,
    )


def _verify_metric(cfg: RunConfig) -> Outcome:
    if cfg.inputs:
        if len(cfg.inputs) < 3:
            raise InvalidInputError(f"'verify metric' needs at least 3 trees, got {len(cfg.inputs)}")
        reports = [check_metric_axioms(_trees(cfg), cfg.p, cfg.tolerance)]
    else:
        reports = metric_suite(cfg.seed, cfg.instances, cfg.p, cfg.depth, cfg.max_children, cfg.workers)
    table = pd.DataFrame(
        [
            (i, r.symmetry_gap, r.triangle_slack, len(r.identity_failures), r.passed)
            for i, r in enumerate(reports)
        ],
        columns=["instance", "symmetry_gap", "triangle_slack", "identity_failures", "passed"],
    )
    failed = int((~table["passed"]).sum())
    return Outcome(
        title=f"AW_{cfg.p:g} metric axioms",
        record={
            "command": "verify",
            "action": "metric",
            "failed": failed,
            "reports": [r.model_dump(mode="json") for r in reports],
        },
        summary={
            "instances": len(reports),
            "failed": failed,
            "min triangle slack": float(table["triangle_slack"].min()),
        },
        table=table,
        passed=failed == 0,
        plot=lambda path: plot_slack(table["triangle_slack"], path, title="triangle slack"),
    )


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def _gen(cfg: RunConfig) -> Outcome:
    from adapted_wasserstein.settings import settings

    steps = cfg.steps[0]
    if cfg.action == "counterexamples":
        out_dir = cfg.output or settings.output_dir / "counterexamples"
        files = []
        for name, (tree_p, tree_q) in counterexample_suite(cfg.n, cfg.eps, cfg.delta).items():
            files.append(save_tree(tree_p, Path(out_dir) / f"{name}_p.json"))
            files.append(save_tree(tree_q, Path(out_dir) / f"{name}_q.json"))
    else:
        if cfg.action == "walk":
            schedule = VolatilitySchedule.from_steps(cfg.schedule(steps))
            tree = random_walk_tree(steps, schedule, cfg.quantization, cfg.points, cfg.horizon, cfg.root)
        elif cfg.action == "gbm":
            tree = gbm_tree(steps, cfg.sigma[0], cfg.horizon)
        else:
            schedule = VolatilitySchedule.from_steps(cfg.schedule(steps), cfg.drifts(steps))
            tree = drift_diffusion_tree(steps, schedule, cfg.horizon, cfg.root)
        # without -o, earlier runs are kept
        target = cfg.output or unique_fpath(settings.output_dir / f"{cfg.action}.json")
        files = [save_tree(tree, target)]
    return Outcome(
        title=f"gen {cfg.action}",
        record={"command": "gen", "action": cfg.action, "files": [str(f) for f in files]},
        summary={"files": len(files)},
        files=files,
    )


HANDLERS: dict[str, Callable[[RunConfig], Outcome]] = {
    "dist": _dist,
    "wass": _wass,
    "weak": _weak,
    "seminorm": _seminorm,
    "project": _project,
    "hedge": _hedge,
    "verify": _verify,
    "gen": _gen,
}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def _write(outcome: Outcome, cfg: RunConfig) -> Optional[Path]:
    if cfg.command == "gen" or cfg.output is None:
        return None
    path = Path(cfg.output)
    if cfg.format == "csv":
        if outcome.table is None:
            raise InvalidInputError(f"'{cfg.command} {cfg.action or ''}' has no CSV output")
        return write_frame(outcome.table, path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(outcome.record, indent=2, sort_keys=True, default=_jsonable)
    path.write_text(text + "\n", encoding="utf-8")
    logger.debug(f"Wrote JSON report to {path}")
    return path


def _render(outcome: Outcome, console: Console, theme: dict[str, str]) -> None:
    console.rule(outcome.title, style=theme["intro"])
    table = Table(show_header=True, header_style=theme["info"])
    table.add_column("quantity")
    table.add_column("value", style=theme["value"], justify="right")
    for key, value in outcome.summary.items():
        shown = f"{value:.10g}" if isinstance(value, float) else str(value)
        table.add_row(key, shown)
    console.print(table)
    for path in outcome.files:
        console.print(f"wrote {path}", style=theme["info"])
    if outcome.passed:
        console.rule("passed", style=theme["passed"])
    else:
        console.rule("FAILED", style=theme["failed"])


def run(config: RunConfig, console: Optional[Console] = None) -> int:
    """Run one subcommand; returns the process exit code.

    0 success, 1 solver failure, 2 invalid input, 3 failed check.
    """
    console = console or Console()
    errors = Console(stderr=True)
    theme = load_theme(config.theme)
    try:
        with console.status(f"Running {config.command} {config.action or ''}...", spinner="dots"):
            outcome = HANDLERS[config.command](config)
        written = _write(outcome, config)
        if config.plot is not None:
            if outcome.plot is None:
                logger.warning(f"'{config.command} {config.action}' has no plot; ignoring --plot")
            else:
                outcome.plot(config.plot)
    except SolverError as e:
        logger.exception(f"Solver failed: {e}")
        errors.print(f"solver failure: {e}", style=theme["error"])
        return EXIT_SOLVER
    except (InvalidInputError, ValidationError) as e:
        logger.exception(f"Invalid input: {e}")
        errors.print(f"invalid input: {e}", style=theme["error"])
        return EXIT_INPUT

    _render(outcome, console, theme)
    if written is not None:
        console.print(f"wrote {written}", style=theme["info"])
    return EXIT_OK if outcome.passed else EXIT_FAILED
