"""Tests for the CLI module."""

import io
import json
from pathlib import Path
from typing import Callable

import pytest
from pydantic import ValidationError
from rich.console import Console

from adapted_wasserstein.cli.configuration import RunConfig, load_theme
from adapted_wasserstein.cli.main import build_parser, config_from_args, main
from adapted_wasserstein.cli.runner import EXIT_FAILED, EXIT_INPUT, EXIT_OK, EXIT_SOLVER, run
from adapted_wasserstein.core.scenario import ScenarioTree, load_tree, save_tree
from adapted_wasserstein.settings import settings


def _quiet() -> Console:
    return Console(file=io.StringIO(), width=120)


@pytest.fixture
def tree_files(tmp_path: Path, step_tree: ScenarioTree) -> list[Path]:
    """The +-1 coin against itself."""
    return [save_tree(step_tree, tmp_path / "p.json"), save_tree(step_tree, tmp_path / "q.json")]


@pytest.mark.unit
def test_config_requires_actions_and_inputs(tree_files: list[Path]) -> None:
    with pytest.raises(ValidationError, match="needs an action"):
        RunConfig(command="hedge", inputs=tree_files[:1])
    with pytest.raises(ValidationError, match="input file"):
        RunConfig(command="dist", inputs=tree_files[:1])
    with pytest.raises(ValidationError, match="--model"):
        RunConfig(command="dist", inputs=tree_files, model="call")
    with pytest.raises(ValidationError):
        RunConfig(command="gen", action="walk", steps=[0])


@pytest.mark.unit
def test_short_schedules_repeat_their_last_entry() -> None:
    cfg = RunConfig(command="gen", action="walk", sigma=[0.5, 1.5])
    assert cfg.schedule(4) == [0.5, 1.5, 1.5, 1.5]
    assert cfg.drifts(2) == [0.0, 0.0]


@pytest.mark.unit
def test_parser_reads_lists() -> None:
    args = build_parser().parse_args(["verify", "gbm", "--N", "25,50", "--sigma1", "0.2"])
    assert args.steps == [25, 50]
    assert args.sigma == [0.2]
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "gbm", "--N", "a,b"])


@pytest.mark.unit
def test_flags_override_the_config_file(write_yaml: Callable[[str, str], Path]) -> None:
    path = write_yaml(
        "run.yml",
        """
        command: verify
        action: gbm
        steps: [10, 20]
        rel_tol: 0.2
        """,
    )
    args = build_parser().parse_args(["verify", "gbm", "--config", str(path), "--rel-tol", "0.05"])
    cfg = config_from_args(args)
    assert cfg.steps == [10, 20]
    assert cfg.rel_tol == 0.05


@pytest.mark.unit
def test_theme_falls_back_to_defaults(tmp_path: Path) -> None:
    assert load_theme(str(tmp_path / "missing.yml"))["passed"] == "bold green"


@pytest.mark.unit
def test_dist_writes_identical_reports(tree_files: list[Path], tmp_path: Path) -> None:
    """Same inputs, same bytes."""
    outputs = []
    for name in ("a.json", "b.json"):
        cfg = RunConfig(command="dist", inputs=tree_files, output=tmp_path / name)
        assert run(cfg, _quiet()) == EXIT_OK
        outputs.append((tmp_path / name).read_bytes())
    assert outputs[0] == outputs[1]
    record = json.loads(outputs[0])
    assert record["value"] == pytest.approx(0.0, abs=1e-9)
    assert record["coupling_violations"] == []


@pytest.mark.unit
def test_dist_csv_lists_the_coupling(tree_files: list[Path], tmp_path: Path) -> None:
    out = tmp_path / "coupling.csv"
    cfg = RunConfig(command="dist", inputs=tree_files, output=out, format="csv")
    assert run(cfg, _quiet()) == EXIT_OK
    assert out.read_text(encoding="utf-8").splitlines()[0] == "source,target,weight"


@pytest.mark.unit
def test_hedge_avar(tree_files: list[Path], tmp_path: Path) -> None:
    """Half a unit of the coin hedges the call: AVaR_0.5 = 0.5."""
    out = tmp_path / "hedge.json"
    cfg = RunConfig(command="hedge", action="avar", inputs=tree_files[:1], k=1.0, alpha=0.5, output=out)
    assert run(cfg, _quiet()) == EXIT_OK
    record = json.loads(out.read_text(encoding="utf-8"))
    assert record["value"] == pytest.approx(0.5, abs=1e-9)
    assert record["strategy"]["r"] == pytest.approx(0.5, abs=1e-9)


@pytest.mark.unit
def test_verify_whi_on_files(tree_files: list[Path]) -> None:
    cfg = RunConfig(command="verify", action="whi", inputs=tree_files)
    assert run(cfg, _quiet()) == EXIT_OK


@pytest.mark.unit
def test_gen_walk(tmp_path: Path) -> None:
    out = tmp_path / "walk.json"
    cfg = RunConfig(command="gen", action="walk", steps=[3], sigma=[0.5], output=out)
    assert run(cfg, _quiet()) == EXIT_OK
    assert len(load_tree(out).path_law.probs) == 8


@pytest.mark.unit
def test_failed_check_exit_code() -> None:
    """A relative tolerance no lattice can meet fails the GBM check."""
    cfg = RunConfig(command="verify", action="gbm", steps=[10, 20], sigma=[0.2], sigma_hat=[0.3], rel_tol=1e-12)
    assert run(cfg, _quiet()) == EXIT_FAILED


@pytest.mark.unit
def test_solver_failure_exit_code(tree_files: list[Path], monkeypatch: pytest.MonkeyPatch) -> None:
    """An LP over the size limit is a solver failure."""
    monkeypatch.setattr(settings, "lp_max_variables", 1)
    assert run(RunConfig(command="dist", inputs=tree_files), _quiet()) == EXIT_SOLVER


@pytest.mark.unit
def test_invalid_tree_exit_code(tmp_path: Path, tree_files: list[Path]) -> None:
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert run(RunConfig(command="dist", inputs=[broken, tree_files[0]]), _quiet()) == EXIT_INPUT


@pytest.mark.unit
def test_main_rejects_invalid_flags(tree_files: list[Path]) -> None:
    """p < 1 never reaches a solver."""
    argv = ["dist", str(tree_files[0]), str(tree_files[1]), "--p", "0.5"]
    assert main(argv) == EXIT_INPUT


@pytest.mark.unit
def test_main_runs_a_subcommand(tree_files: list[Path], tmp_path: Path) -> None:
    out = tmp_path / "seminorm.json"
    assert main(["seminorm", str(tree_files[0]), "--p", "2", "-o", str(out)]) == EXIT_OK
    record = json.loads(out.read_text(encoding="utf-8"))
    assert record["value"] == pytest.approx(1.0)
    assert record["martingale"] is True


@pytest.mark.unit
def test_gen_without_output_keeps_earlier_files(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(settings, "output_dir", tmp_path)
    cfg = RunConfig(command="gen", action="walk", steps=[2], sigma=[1.0])
    assert run(cfg, _quiet()) == EXIT_OK
    assert run(cfg, _quiet()) == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["walk.json", "walk_1.json"]
