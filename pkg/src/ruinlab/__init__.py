"""Finite-time ruin of an insurance reserve invested in risky assets."""

from .asymptotics import AsymptoticConstant, gbm_constant, reduction_ratio
from .levy_models import ClaimsProcessSpec, ParetoClaims, UniformClaims
from .market_models import GBM, CirParams, ConstantRate, DiffusionSV, ExpLevy, MarketModel
from .mc_engine import (
    RuinEstimate,
    RuinProblem,
    convergence_study,
    estimate_ruin_probability,
    estimate_ruin_probability_is,
)
from .strategies import AsymptoticallyOptimal, ConstantStrategy, make_feedback

__all__ = [
    "AsymptoticConstant",
    "AsymptoticallyOptimal",
    "CirParams",
    "ClaimsProcessSpec",
    "ConstantRate",
    "ConstantStrategy",
    "DiffusionSV",
    "ExpLevy",
    "GBM",
    "MarketModel",
    "ParetoClaims",
    "RuinEstimate",
    "RuinProblem",
    "UniformClaims",
    "convergence_study",
    "estimate_ruin_probability",
    "estimate_ruin_probability_is",
    "gbm_constant",
    "make_feedback",
    "reduction_ratio",
]

__version__ = "0.1.0"
