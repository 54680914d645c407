"""Investment strategies, the return process ``Z^pi``, and validity checks.

Fractions ``pi^1 .. pi^n`` go to the risky assets and ``pi^0 = 1 - sum pi^k``
to the bank account.  Over cell ``(t_{i-1}, t_i]``::

    dZ = pi^0 r dt + sum_k pi^k dU^k

with fractions frozen at their value for the cell (left-limit evaluation).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .market_models import (
    BoundaryPowerJump,
    DiffusionSV,
    ExpLevy,
    GBM,
    JumpLaw,
    MarketModel,
    cir_exponential_moment_horizon,
)
from .stochastic_calc import SamplePath

__all__ = [
    "AsymptoticallyOptimal",
    "ConditionReport",
    "ConstantStrategy",
    "FEEDBACK_RULES",
    "FeedbackState",
    "FeedbackStrategy",
    "Verdict",
    "asymptotically_optimal_pi",
    "build_Z",
    "check_exponential_moment_conditions",
    "check_levy_moment_condition",
    "check_no_short_selling",
    "feedback_fractions",
    "make_feedback",
    "optimal_fractions",
    "psi",
    "validate_strategy",
]

# variance floor used when pi* divides by a CIR variance that touched zero
SV_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class ConstantStrategy:
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def bank_fraction(self) -> float:
        return 1.0 - sum(self.weights)

    @property
    def fractions(self) -> tuple[float, ...]:
        return (self.bank_fraction,) + self.weights

    @property
    def bound(self) -> float:
        return max((abs(w) for w in self.weights), default=0.0)


class FeedbackState(NamedTuple):
    """Left limits seen by a feedback rule; arrays over the path batch."""

    reserve: np.ndarray
    rate: np.ndarray
    prices: np.ndarray  # (batch, n_assets)
    scaled_claims: np.ndarray


@dataclass(frozen=True)
class FeedbackStrategy:
    """``pi = rule(X_-, r_-, S_-, eps Y_-)`` returning risky fractions of shape (batch, n).

    ``rule`` must be a pure, picklable function.  ``bound``, if known, is
    ``sup |pi^k|`` over all states and is used by the moment checks.
    """

    rule: Callable[[FeedbackState], np.ndarray]
    n_assets: int
    name: str = "feedback"
    bound: float | None = None
    jump_safe: bool = False


@dataclass(frozen=True)
class AsymptoticallyOptimal:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


Strategy = ConstantStrategy | FeedbackStrategy | AsymptoticallyOptimal


# -- named feedback rules ------------------------------------------------------


@dataclass(frozen=True)
class _Threshold:
    level: float
    high: tuple[float, ...]
    low: tuple[float, ...]

    def __call__(self, state: FeedbackState) -> np.ndarray:
        above = (state.reserve >= self.level)[:, None]
        return np.where(above, np.asarray(self.high), np.asarray(self.low))


@dataclass(frozen=True)
class _Cushion:
    multiplier: float
    floor: float
    cap: float

    def __call__(self, state: FeedbackState) -> np.ndarray:
        x = state.reserve
        cushion = np.maximum(x - self.floor, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            pi = np.where(x > 0, self.multiplier * cushion / np.where(x > 0, x, 1.0), 0.0)
        return np.clip(pi, 0.0, self.cap)[:, None]


def _threshold(n_assets: int, level: float, high, low) -> FeedbackStrategy:
    high, low = tuple(map(float, high)), tuple(map(float, low))
    if len(high) != n_assets or len(low) != n_assets:
        raise ValueError("threshold weights must have one entry per asset")
    bound = max(abs(w) for w in high + low) if n_assets else 0.0
    safe = all(0 <= w for w in high + low) and sum(high) <= 1 and sum(low) <= 1
    return FeedbackStrategy(_Threshold(float(level), high, low), n_assets, "threshold", bound, safe)


def _cushion(n_assets: int, multiplier: float, floor: float, cap: float = 1.0) -> FeedbackStrategy:
    if n_assets != 1:
        raise ValueError("the cushion rule invests in a single risky asset")
    if cap < 0:
        raise ValueError("cap must be >= 0")
    return FeedbackStrategy(_Cushion(float(multiplier), float(floor), float(cap)), 1, "cushion", float(cap), cap <= 1)


FEEDBACK_RULES: dict[str, Callable[..., FeedbackStrategy]] = {
    "threshold": _threshold,
    "cushion": _cushion,
}


def make_feedback(name: str, n_assets: int, **params) -> FeedbackStrategy:
    try:
        factory = FEEDBACK_RULES[name]
    except KeyError:
        raise ValueError(f"unknown feedback rule {name!r}; known: {sorted(FEEDBACK_RULES)}") from None
    return factory(n_assets, **params)


def feedback_fractions(
    strategy: FeedbackStrategy,
    reserve: np.ndarray,
    rate: np.ndarray,
    prices: np.ndarray,
    scaled_claims: np.ndarray,
) -> np.ndarray:
    """Fractions ``(pi^0, ..., pi^n)`` per cell from node-state arrays.

    Inputs are given at nodes ``t_0 .. t_M`` (``prices`` with a trailing asset
    axis); cell ``i`` uses the state at node ``t_{i-1}`` only.
    """
    m = reserve.shape[-1] - 1
    out = []
    for i in range(m):
        state = FeedbackState(reserve[..., i], rate[..., i], prices[..., i, :], scaled_claims[..., i])
        risky = np.asarray(strategy.rule(state), dtype=float)
        out.append(np.concatenate([1.0 - risky.sum(axis=-1, keepdims=True), risky], axis=-1))
    return np.stack(out, axis=-2)


# -- optimal fraction ------------------------------------------------------------


def psi(pi, mu, r, sigma, alpha):
    """Per-unit-time exponent ``-(1 - pi) r - pi mu + (1 + alpha) pi^2 sigma^2 / 2``."""
    return -(1 - pi) * r - pi * mu + 0.5 * (1 + alpha) * pi**2 * sigma**2


def asymptotically_optimal_pi(mu, r, sigma, alpha):
    """Pointwise minimiser ``(mu - r) / ((1 + alpha) sigma^2)`` of :func:`psi`."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("asymptotically optimal fraction needs sigma > 0")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    out = (np.asarray(mu) - np.asarray(r)) / ((1 + alpha) * sigma**2)
    return float(out) if np.ndim(out) == 0 else out


# -- Z construction ---------------------------------------------------------------


def validate_strategy(strategy: Strategy, market: MarketModel) -> None:
    """Reject strategy/market combinations that cannot be simulated."""
    n = market.n_assets
    if isinstance(strategy, ConstantStrategy):
        if len(strategy.weights) != n:
            raise ValueError(f"strategy has {len(strategy.weights)} weights for {n} assets")
        for w, asset in zip(strategy.weights, market.assets):
            if isinstance(asset, ExpLevy) and asset.jump_rate > 0:
                lo, hi = asset.jump_law.support
                if 1 + w * lo <= 0 or 1 + w * hi <= 0:
                    raise ValueError(f"weight {w} lets a jump of the asset push Z below -1")
    elif isinstance(strategy, AsymptoticallyOptimal):
        if n != 1 or not isinstance(market.assets[0], (GBM, DiffusionSV)):
            raise ValueError("the asymptotically optimal strategy needs exactly one diffusion asset")
        if isinstance(market.assets[0], GBM) and market.assets[0].sigma <= 0:
            raise ValueError("the asymptotically optimal strategy needs sigma > 0")
    elif isinstance(strategy, FeedbackStrategy):
        if strategy.n_assets != n:
            raise ValueError(f"feedback rule built for {strategy.n_assets} assets, market has {n}")
        has_jumps = any(isinstance(a, ExpLevy) and a.jump_rate > 0 for a in market.assets)
        if has_jumps and not strategy.jump_safe:
            raise ValueError("feedback rule may short or lever jump assets; not allowed")
    else:
        raise TypeError(f"unknown strategy type {type(strategy).__name__}")


def optimal_fractions(
    strategy: AsymptoticallyOptimal,
    market: MarketModel,
    times: np.ndarray,
    variance: np.ndarray | None,
) -> np.ndarray:
    """Cell fractions ``pi*`` (batch, M, 1) using left-point rate and variance."""
    asset = market.assets[0]
    r_left = market.rate.at(times[:-1])
    if isinstance(asset, GBM):
        pi = asymptotically_optimal_pi(asset.mu, r_left, asset.sigma, strategy.alpha)
        return np.asarray(pi, dtype=float).reshape(1, -1, 1)
    v_left = np.maximum(variance[:, :-1], SV_VARIANCE_FLOOR)
    pi = asymptotically_optimal_pi(asset.mu, r_left, np.sqrt(v_left), strategy.alpha)
    return pi[..., None]


def build_Z(strategy_or_fractions, rate: SamplePath, assets: list[SamplePath]) -> SamplePath:
    """Assemble ``Z^pi`` from the integrated rate and asset return paths.

    ``strategy_or_fractions`` is a :class:`ConstantStrategy` or an array of
    risky fractions broadcastable to ``(batch, M, n_assets)``.  Asset Brownian
    drivers are independent, so the quadratic variation adds up weighted by
    squared fractions.
    """
    if isinstance(strategy_or_fractions, FeedbackStrategy):
        raise TypeError("feedback strategies need interleaved construction with the reserve")
    if isinstance(strategy_or_fractions, AsymptoticallyOptimal):
        raise TypeError("resolve the asymptotically optimal strategy to fractions first")
    for a in assets:
        if not np.array_equal(a.times, rate.times):
            raise ValueError("asset and rate paths live on different grids")
    if isinstance(strategy_or_fractions, ConstantStrategy):
        w = strategy_or_fractions.weights
        if len(w) != len(assets):
            raise ValueError("one weight per asset path is required")
        cont = strategy_or_fractions.bank_fraction * rate.cont
        jumps = np.zeros_like(rate.cont)
        qv = np.zeros_like(rate.cont)
        for wk, a in zip(w, assets):
            cont = cont + wk * a.cont
            jumps = jumps + wk * a.jumps
            qv = qv + wk**2 * a.qv
    else:
        frac = np.asarray(strategy_or_fractions, dtype=float)
        if frac.shape[-1] != len(assets):
            raise ValueError("fractions need one trailing entry per asset")
        cont = (1.0 - frac.sum(axis=-1)) * rate.cont
        jumps = np.zeros_like(cont)
        qv = np.zeros_like(cont)
        for k, a in enumerate(assets):
            pk = frac[..., k]
            cont = cont + pk * a.cont
            jumps = jumps + pk * a.jumps
            qv = qv + pk**2 * a.qv
    return SamplePath.from_increments(rate.times, cont, jumps, qv)


# -- condition checks ---------------------------------------------------------------


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDABLE = "undecidable"


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    verdict: Verdict
    method: str
    params: dict = field(default_factory=dict)
    value: float = math.nan
    detail: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS


def check_levy_moment_condition(
    law: JumpLaw | None,
    rate: float,
    alpha: float,
    delta: float | None = None,
    n_assets: int = 1,
    a: float = 0.5,
) -> ConditionReport:
    """Decide ``int_{-1}^{-a} (1 + u)^(-n alpha - delta) eta(du) < inf``.

    ``delta`` defaults to ``0.1 * alpha``.  Only the behaviour of ``eta`` near
    -1 matters; laws bounded away from -1 always pass.
    """
    if delta is None:
        delta = 0.1 * alpha
    if not 0 < a < 1:
        raise ValueError(f"a must lie in (0, 1), got {a}")
    power = n_assets * alpha + delta
    params = {"alpha": alpha, "delta": delta, "a": a, "n": n_assets}
    name = "levy-moment"
    if rate == 0 or law is None:
        return ConditionReport(name, Verdict.HOLDS, "no-jumps", params, 0.0, "jump measure is zero")
    lo, _ = law.support
    if lo < -1:
        return ConditionReport(name, Verdict.FAILS, "support", params, math.inf, "jump measure charges (-inf, -1]")
    if isinstance(law, BoundaryPowerJump):
        exponent = law.beta - 1 - power
        if exponent > -1:
            val = rate * law.truncated_moment(power, a)
            return ConditionReport(
                name, Verdict.HOLDS, "analytic-power", params, val,
                f"integrand ~ w^{exponent:.6g} near 0 is integrable",
            )
        return ConditionReport(
            name, Verdict.FAILS, "analytic-power", params, math.inf,
            f"integrand ~ w^{exponent:.6g} near 0 is not integrable",
        )
    if hasattr(law, "truncated_moment") and lo > -1:
        val = rate * law.truncated_moment(power, a)
        return ConditionReport(name, Verdict.HOLDS, "bounded-support", params, val, f"support starts at {lo:.6g} > -1")
    return ConditionReport(name, Verdict.UNDECIDABLE, "unsupported-law", params, math.nan, type(law).__name__)


def check_no_short_selling(strategy: Strategy) -> ConditionReport:
    """All fractions, bank account included, in [0, 1]."""
    name = "no-short-selling"
    if isinstance(strategy, ConstantStrategy):
        fr = strategy.fractions
        ok = all(0.0 <= f <= 1.0 for f in fr)
        return ConditionReport(
            name, Verdict.HOLDS if ok else Verdict.FAILS, "constant", {"fractions": list(fr)},
            min(fr), "fractions in [0, 1]" if ok else "a fraction leaves [0, 1]",
        )
    if isinstance(strategy, FeedbackStrategy) and strategy.jump_safe:
        return ConditionReport(name, Verdict.HOLDS, "rule-declared", {"rule": strategy.name}, detail="rule output clipped to [0, 1]")
    return ConditionReport(name, Verdict.UNDECIDABLE, "unbounded-rule", {}, detail="cannot bound fractions")


def _fraction_bound(strategy: Strategy, asset, rate_bound: float) -> float | None:
    if isinstance(strategy, (ConstantStrategy, FeedbackStrategy)):
        return strategy.bound
    if isinstance(strategy, AsymptoticallyOptimal) and isinstance(asset, GBM) and asset.sigma > 0:
        # |mu - r| is convex in r, so the extremes sit at the ends of [0, rate_bound]
        scale = (1 + strategy.alpha) * asset.sigma**2
        return max(abs(asset.mu), abs(asset.mu - rate_bound)) / scale
    return None


def check_exponential_moment_conditions(
    strategy: Strategy,
    asset,
    alpha: float,
    gamma: float | None = None,
    rate_bound: float = 0.0,
) -> list[ConditionReport]:
    """Sufficient exponential-moment conditions for a single diffusion asset.

    Returns three reports: the integrated-variance moment with weight
    ``2 gamma^2 + gamma``, the Novikov condition with weight ``alpha^2 / 2``,
    and the drift moment.
    """
    if gamma is None:
        gamma = alpha + 1.0
    if not gamma > alpha:
        raise ValueError(f"gamma must exceed alpha, got gamma={gamma}, alpha={alpha}")
    bound = _fraction_bound(strategy, asset, rate_bound)
    params = {"alpha": alpha, "gamma": gamma, "pi_bound": bound}
    reports = []
    for name, weight in (("variance-moment", 2 * gamma**2 + gamma), ("novikov", alpha**2 / 2)):
        reports.append(_variance_moment(name, weight, bound, asset, dict(params, weight=weight)))
    if bound is not None and isinstance(asset, (GBM, DiffusionSV)):
        reports.append(ConditionReport("drift-moment", Verdict.HOLDS, "bounded-drift", params, detail="bounded drift"))
    else:
        reports.append(ConditionReport("drift-moment", Verdict.UNDECIDABLE, "unbounded", params, detail="no drift bound"))
    return reports


def _variance_moment(name, weight, bound, asset, params) -> ConditionReport:
    if bound is None:
        return ConditionReport(name, Verdict.UNDECIDABLE, "unbounded-strategy", params, detail="no bound on |pi|")
    if isinstance(asset, GBM):
        exponent = weight * bound**2 * asset.sigma**2
        return ConditionReport(name, Verdict.HOLDS, "deterministic", params, exponent, "deterministic exponent")
    if isinstance(asset, DiffusionSV):
        cir = asset.variance
        u = weight * bound**2
        if u == 0:
            return ConditionReport(name, Verdict.HOLDS, "deterministic", dict(params, u=0.0), 0.0, "zero exposure")
        if cir.delta == 0:
            return ConditionReport(name, Verdict.HOLDS, "deterministic", dict(params, u=u), math.inf, "deterministic variance")
        t_star = cir_exponential_moment_horizon(u, cir.kappa, cir.delta)
        p = dict(params, u=u, kappa=cir.kappa, delta=cir.delta)
        if t_star > 1.0:
            detail = "finite for all t" if math.isinf(t_star) else f"finite up to t*={t_star:.6g}"
            return ConditionReport(name, Verdict.HOLDS, "cir-horizon", p, t_star, detail)
        return ConditionReport(name, Verdict.FAILS, "cir-horizon", p, t_star, f"explodes at t*={t_star:.6g} < 1")
    return ConditionReport(name, Verdict.UNDECIDABLE, "unsupported-vol-model", params, detail=type(asset).__name__)
