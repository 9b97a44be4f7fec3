"""Public API for the hedging subpackage."""

from .projection import project_strategy, projection_identity_gap
from .risk import avar, oce_risk, wealth_distribution
from .solvers import (
    HedgeResult,
    expected_loss_hedge,
    indifference_price,
    optimal_avar_hedge,
    optimal_oce_hedge,
    price_range,
    superhedge_price,
    utility_maximize,
)
from .specs import Claim, LossSpec, PrefixStrategy, Strategy, StrategyFile, UtilitySpec
from .verify import (
    VerificationReport,
    call_tightness,
    verify_avar_lipschitz,
    verify_contraction,
    verify_oce_stability,
    verify_shi,
    verify_whi,
)

__all__ = [
    "Claim",
    "HedgeResult",
    "LossSpec",
    "PrefixStrategy",
    "Strategy",
    "StrategyFile",
    "UtilitySpec",
    "VerificationReport",
    "avar",
    "call_tightness",
    "expected_loss_hedge",
    "indifference_price",
    "oce_risk",
    "optimal_avar_hedge",
    "optimal_oce_hedge",
    "price_range",
    "project_strategy",
    "projection_identity_gap",
    "superhedge_price",
    "utility_maximize",
    "verify_avar_lipschitz",
    "verify_contraction",
    "verify_oce_stability",
    "verify_shi",
    "verify_whi",
    "wealth_distribution",
]
