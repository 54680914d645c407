"""The asymptotic constant ``K = int_0^1 E E(Z)_t^-alpha dt`` and what it feeds.

For a Lévy return process ``E E(Z)_t^-alpha = exp(rho t)`` and so
``K = (e^rho - 1) / rho``.  The exponent ``rho`` splits additively into a
Gaussian part ``sigma^2 (alpha^2 + alpha) / 2 - alpha r`` and a
compound-Poisson part ``int ((1 + u)^-alpha - 1) eta(du)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .levy_models import LevyMeasureTail
from .market_models import ExpLevy, GBM, JumpLaw, MarketModel
from .stochastic_calc import JumpConditionError, SamplePath
from .strategies import check_levy_moment_condition

__all__ = [
    "AsymptoticConstant",
    "asymptotic_ruin_approx",
    "constant_from_exponent",
    "estimate_constant_mc",
    "family_infimum",
    "gbm_constant",
    "gbm_exponent",
    "jump_exponent",
    "levy_constant",
    "reduction_ratio",
]

_SERIES_THRESHOLD = 1e-6


@dataclass(frozen=True)
class AsymptoticConstant:
    value: float
    method: str
    std_error: float | None = None
    exponent: float | None = None

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"asymptotic constant must be positive, got {self.value}")


def _expm1_over(rho: float) -> float:
    if rho == 0:
        return 1.0
    if abs(rho) < _SERIES_THRESHOLD:
        return 1.0 + rho / 2.0 + rho * rho / 6.0
    return math.expm1(rho) / rho


def constant_from_exponent(rho: float) -> AsymptoticConstant:
    """``int_0^1 e^(rho t) dt`` with the removable singularity at 0."""
    return AsymptoticConstant(_expm1_over(rho), "closed-form", None, rho)


def gbm_exponent(alpha: float, r: float, sigma: float) -> float:
    return 0.5 * sigma**2 * (alpha**2 + alpha) - alpha * r


def gbm_constant(alpha: float, r: float, sigma: float) -> AsymptoticConstant:
    """Closed-form ``K`` for ``Z_t = r t + sigma B_t``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    return constant_from_exponent(gbm_exponent(alpha, r, sigma))


def jump_exponent(law: JumpLaw | None, rate: float, alpha: float, scale: float = 1.0) -> float:
    """``b`` with ``E E(scale * J)_t^-alpha = exp(b t)`` for compound-Poisson ``J``."""
    if rate == 0 or law is None or scale == 0:
        return 0.0
    lo, hi = law.support
    if 1 + scale * lo < 0 or 1 + scale * hi <= 0:
        raise JumpConditionError(f"scaled jumps reach below -1 (scale={scale}, support={law.support})")
    if scale == 1.0:
        report = check_levy_moment_condition(law, rate, alpha, delta=0.0)
        if not report.holds:
            raise ValueError(
                "jump factor diverges: int_{-1}^{-a} (1+z)^-alpha eta(dz) < inf is violated "
                f"({report.detail})"
            )
    moment = law.negative_moment(alpha, scale)
    if not math.isfinite(moment):
        raise ValueError("jump factor diverges: negative moment of the jump law is infinite")
    return rate * (moment - 1.0)


def levy_constant(market: MarketModel, weights: Sequence[float], alpha: float) -> AsymptoticConstant:
    """Closed-form ``K`` for constant fractions in a Lévy market.

    Needs a constant rate and GBM / exponential-Lévy assets with independent
    drivers.
    """
    if not market.rate.is_constant:
        raise ValueError("closed form needs a constant interest rate")
    r = float(np.asarray(market.rate.at(0.0)))
    if len(weights) != market.n_assets:
        raise ValueError("one weight per asset is required")
    drift = (1.0 - sum(weights)) * r
    var = 0.0
    jumps = 0.0
    for w, asset in zip(weights, market.assets):
        if isinstance(asset, GBM):
            drift += w * asset.mu
            var += (w * asset.sigma) ** 2
        elif isinstance(asset, ExpLevy):
            drift += w * asset.drift
            var += (w * asset.sigma) ** 2
            jumps += jump_exponent(asset.jump_law, asset.jump_rate, alpha, w)
        else:
            raise ValueError(f"no closed form for {type(asset).__name__} assets")
    rho = gbm_exponent(alpha, drift, math.sqrt(var)) + jumps
    return constant_from_exponent(rho)


def estimate_constant_mc(
    sampler: Callable[[int, int], SamplePath],
    alpha: float,
    blocks: Sequence[tuple[int, int]],
) -> AsymptoticConstant:
    """Trapezoidal time integral of the path average of ``E(Z)_t^-alpha``.

    ``sampler(block, n)`` returns a batch of ``E(Z)`` paths for one block.
    The standard error comes from the spread of the per-path time integrals.
    """
    integrals = []
    for block, n in blocks:
        ez = sampler(block, n)
        if np.any(ez.values <= 0):
            raise JumpConditionError("non-positive stochastic exponential; a jump violated > -1")
        v = ez.values ** (-alpha)
        dt = ez.dt
        integrals.append(np.sum(0.5 * (v[..., 1:] + v[..., :-1]) * dt, axis=-1).reshape(-1))
    per_path = np.concatenate(integrals)
    n = per_path.size
    value = float(np.mean(per_path))
    se = float(np.std(per_path, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return AsymptoticConstant(value, "time-quadrature-of-mc", se, None)


def asymptotic_ruin_approx(x: float, eps: float, alpha: float, tail: LevyMeasureTail, K: AsymptoticConstant) -> float:
    """``nu(-inf, -1/eps) x^-alpha K``."""
    if not (x > 0 and eps > 0):
        raise ValueError("asymptotic approximation needs x > 0 and eps > 0")
    return tail(1.0 / eps) * x ** (-alpha) * K.value


def reduction_ratio(alpha: float, r: float, sharpe: float) -> float:
    """Limit ratio of ruin probabilities, optimal fraction versus no investment, GBM case."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not r > 0:
        raise ValueError(f"reduction ratio needs r > 0, got {r}")
    ar = alpha * r
    gain = alpha * sharpe**2 / (2 * (1 + alpha))
    return (-math.expm1(-ar - gain)) / (-math.expm1(-ar)) * ar / (ar + gain)


def family_infimum(candidates: Sequence[tuple[object, AsymptoticConstant | float]]):
    """``(strategy, K)`` with the smallest ``K``; ties go to the earliest entry."""
    if not candidates:
        raise ValueError("family_infimum needs at least one candidate")
    best = None
    for strategy, k in candidates:
        val = k.value if isinstance(k, AsymptoticConstant) else float(k)
        if best is None or val < best[1]:
            best = (strategy, val, k)
    return best[0], best[2]
