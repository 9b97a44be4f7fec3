"""CLI configuration management."""

from pathlib import Path
from typing import Literal, Optional

import yaml
from loguru import logger
from pydantic import ConfigDict, Field, field_validator, model_validator

from adapted_wasserstein.utils.serde import SerdeMixin

DEFAULT_THEME = {
    "intro": "bold blue",
    "outtro": "bold blue",
    "info": "bold bright_black",
    "value": "bold cyan",
    "passed": "bold green",
    "failed": "bold yellow",
    "error": "bold red",
}

ACTIONS: dict[str, tuple[str, ...]] = {
    "dist": (),
    "wass": (),
    "weak": (),
    "seminorm": (),
    "project": (),
    "hedge": ("avar", "loss", "utility", "indiff"),
    "verify": (
        "whi",
        "shi",
        "avar",
        "contraction",
        "oce",
        "metric",
        "scaling",
        "gbm",
        "counterexamples",
        "collapse",
    ),
    "gen": ("walk", "gbm", "diffusion", "counterexamples"),
}

# input files each subcommand reads; None means "any number, including none"
INPUT_COUNTS: dict[str, Optional[int]] = {
    "dist": 2,
    "wass": 2,
    "weak": 2,
    "seminorm": 1,
    "project": 2,
    "hedge": 1,
    "verify": None,
    "gen": 0,
}


def load_theme(config_path: Optional[str] = None) -> dict:
    """Load the CLI theme from a config file."""
    try:
        if config_path is None:
            return DEFAULT_THEME.copy()
        p = Path(config_path)
        if not p.exists():
            logger.warning(f"Theme file not found at {p}; using defaults.")
            return DEFAULT_THEME.copy()
        with p.open("r", encoding="utf-8") as f:
            config = yaml.safe_load(f) or {}
            theme = config.get("theme") or {}
            return {**DEFAULT_THEME, **theme}
    except Exception as e:
        logger.warning(f"Failed to load theme from {config_path}: {e}")
        return DEFAULT_THEME.copy()


class RunConfig(SerdeMixin):
    """Everything one CLI invocation needs.

    Built from argparse flags or a YAML file (`--config`); unknown fields are
    rejected. `seed` fully determines every randomized suite.
    """

    model_config = ConfigDict(extra="forbid")

    command: Literal["dist", "wass", "weak", "seminorm", "project", "hedge", "verify", "gen"]
    action: Optional[str] = None
    inputs: list[Path] = Field(default_factory=list)

    # distances
    p: float = Field(default=1.0, ge=1.0)
    method: Literal["lp", "dp", "sync"] = "lp"
    stage_cost: Literal["martingale_quadratic", "nested_power"] = "martingale_quadratic"

    # hedging
    k: float = Field(default=1.0, ge=0.0)
    alpha: float = Field(default=0.5, gt=0.0, le=1.0)
    m: float = 0.0
    claim: Literal["call", "tent", "zero"] = "call"
    strike: float = 0.0
    loss: Literal["positive_part", "exponential", "avar"] = "positive_part"
    utility: Literal["linear_capped", "capped_exponential", "linear"] = "linear_capped"
    cap: float = 5.0
    risk_aversion: float = Field(default=1.0, gt=0.0)
    strategy: Optional[Path] = None
    slope: float = 0.5
    model: Optional[Literal["call"]] = None

    # models and sweeps
    steps: list[int] = Field(default_factory=lambda: [4])
    sigma: list[float] = Field(default_factory=lambda: [1.0])
    sigma_hat: list[float] = Field(default_factory=lambda: [1.0])
    mu: list[float] = Field(default_factory=lambda: [0.0])
    horizon: float = Field(default=1.0, gt=0.0)
    root: float = 0.0
    quantization: Literal["binomial", "gauss-hermite"] = "binomial"
    points: int = Field(default=3, ge=2)
    n: int = Field(default=100, ge=1)
    eps: float = Field(default=0.01, gt=0.0)
    delta: float = Field(default=0.1, gt=0.0)
    depth: int = Field(default=2, ge=1)
    max_children: int = Field(default=3, ge=1)
    instances: int = Field(default=100, ge=1)
    pairs: int = Field(default=10, ge=1)
    seed: int = 0
    workers: Optional[int] = Field(default=None, ge=1)

    # tolerances
    tolerance: float = Field(default=1e-7, ge=0.0)
    rel_tol: float = Field(default=0.1, gt=0.0)

    # outputs
    output: Optional[Path] = None
    format: Literal["json", "csv"] = "json"
    plot: Optional[Path] = None
    theme: Optional[str] = None

    @field_validator("steps")
    @classmethod
    def _positive_steps(cls, v: list[int]) -> list[int]:
        if not v or any(n < 1 for n in v):
            raise ValueError(f"N must be a non-empty list of positive integers, got {v}")
        return v

    @field_validator("sigma", "sigma_hat")
    @classmethod
    def _non_negative_sigma(cls, v: list[float]) -> list[float]:
        if not v or any(s < 0 for s in v):
            raise ValueError(f"volatilities must be a non-empty list of values >= 0, got {v}")
        return v

    @model_validator(mode="after")
    def _check_action(self) -> "RunConfig":
        allowed = ACTIONS[self.command]
        if allowed and self.action not in allowed:
            raise ValueError(f"'{self.command}' needs an action in {allowed}, got {self.action!r}")
        if not allowed and self.action is not None:
            raise ValueError(f"'{self.command}' takes no action, got {self.action!r}")
        expected = INPUT_COUNTS[self.command]
        if expected is not None and len(self.inputs) != expected:
            raise ValueError(
                f"'{self.command}' reads {expected} input file(s), got {len(self.inputs)}"
            )
        if self.model is not None and (self.command, self.action) != ("verify", "avar"):
            raise ValueError("--model is only used by 'verify avar'")
        return self

    def schedule(self, steps: int, hat: bool = False) -> list[float]:
        """Step volatilities for `steps` steps; a short list repeats its last entry."""
        values = self.sigma_hat if hat else self.sigma
        return (values + [values[-1]] * steps)[:steps]

    def drifts(self, steps: int) -> list[float]:
        return (self.mu + [self.mu[-1]] * steps)[:steps]
