"""Interest rate and risky-asset models, and their grid simulation.

Asset returns are represented by the driver ``U`` with ``dS / S_- = dU``:

* :class:`GBM` -- ``dU = mu dt + sigma dB``;
* :class:`ExpLevy` -- ``dU = a dt + sigma dB + dJ`` with finite-activity
  jumps ``J`` whose sizes lie strictly above -1;
* :class:`DiffusionSV` -- ``dU = mu dt + sqrt(V) dB`` with CIR variance ``V``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .rng import asset_stream_tags, stream
from .stochastic_calc import SamplePath, node_indices, place_jumps

__all__ = [
    "AssetDraws",
    "BoundaryPowerJump",
    "CirParams",
    "ConstantRate",
    "DegenerateJump",
    "DiffusionSV",
    "ExpLevy",
    "GBM",
    "MarketModel",
    "PiecewiseConstantRate",
    "UniformJump",
    "asset_path",
    "cir_exponential_moment_horizon",
    "draw_asset_jumps",
    "rate_path",
    "simulate_asset_return_increments",
    "simulate_cir_variance",
]


# -- interest rates ---------------------------------------------------------


@dataclass(frozen=True)
class ConstantRate:
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"interest rate must be >= 0, got {self.r}")

    @property
    def is_constant(self) -> bool:
        return True

    @property
    def bound(self) -> float:
        return self.r

    def at(self, t):
        return np.full(np.shape(t), self.r, dtype=float)

    def integrated(self, times: np.ndarray) -> np.ndarray:
        return self.r * np.diff(times)


@dataclass(frozen=True)
class PiecewiseConstantRate:
    """Right-continuous step rate: ``values[k]`` on ``[breaks[k], breaks[k + 1])``."""

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breaks) != len(self.values) or not self.breaks:
            raise ValueError("breaks and values must be non-empty and of equal length")
        if self.breaks[0] != 0.0 or any(b <= a for a, b in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breaks must start at 0 and increase strictly")
        if min(self.values) < 0:
            raise ValueError("interest rates must be >= 0")

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    @property
    def bound(self) -> float:
        return max(self.values)

    def at(self, t):
        idx = np.searchsorted(np.asarray(self.breaks), t, side="right") - 1
        return np.asarray(self.values, dtype=float)[idx]

    def integrated(self, times: np.ndarray) -> np.ndarray:
        b = np.asarray(self.breaks + (np.inf,))
        v = np.asarray(self.values, dtype=float)
        # cumulative integral evaluated at every node
        knots = np.concatenate([[0.0], np.cumsum(v[:-1] * np.diff(b[:-1]))])
        k = np.searchsorted(b, times, side="right") - 1
        cum = knots[k] + v[k] * (times - b[k])
        return np.diff(cum)


Rate = ConstantRate | PiecewiseConstantRate


def rate_path(rate: Rate, times: np.ndarray) -> SamplePath:
    """Deterministic path of ``int_0^t r_s ds``."""
    return SamplePath.from_increments(times, rate.integrated(times))


# -- jump laws ---------------------------------------------------------------


@dataclass(frozen=True)
class DegenerateJump:
    value: float

    def __post_init__(self):
        if not self.value > -1:
            raise ValueError(f"jump size must exceed -1, got {self.value}")

    @property
    def support(self) -> tuple[float, float]:
        return self.value, self.value

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return np.full(np.shape(u), self.value)

    def negative_moment(self, alpha: float, scale: float = 1.0) -> float:
        return (1.0 + scale * self.value) ** (-alpha)

    def truncated_moment(self, power: float, a: float) -> float:
        """``E[(1 + U)^-power ; U <= -a]``."""
        return (1.0 + self.value) ** (-power) if self.value <= -a else 0.0


@dataclass(frozen=True)
class UniformJump:
    low: float
    high: float

    def __post_init__(self):
        if not -1 < self.low < self.high:
            raise ValueError(f"need -1 < low < high, got [{self.low}, {self.high}]")

    @property
    def support(self) -> tuple[float, float]:
        return self.low, self.high

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return self.low + (self.high - self.low) * np.asarray(u)

    def negative_moment(self, alpha: float, scale: float = 1.0) -> float:
        if scale == 0:
            return 1.0
        lo, hi = 1.0 + scale * self.low, 1.0 + scale * self.high
        if alpha == 1:
            area = math.log(hi / lo) if scale > 0 else math.log(lo / hi)
        else:
            area = abs(hi ** (1 - alpha) - lo ** (1 - alpha)) / abs(1 - alpha)
        return area / (abs(scale) * (self.high - self.low))

    def truncated_moment(self, power: float, a: float) -> float:
        hi = min(self.high, -a)
        if hi <= self.low:
            return 0.0
        val, _ = integrate.quad(lambda u: (1 + u) ** (-power), self.low, hi)
        return val / (self.high - self.low)


@dataclass(frozen=True)
class BoundaryPowerJump:
    """Density proportional to ``(1 + u)^(beta - 1)`` on ``(-1, upper)``.

    Mass accumulates at -1 at a rate set by ``beta``; this is the family on
    which the near-(-1) moment conditions are decided.
    """

    beta: float
    upper: float = -0.5

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.upper > -1:
            raise ValueError(f"upper must exceed -1, got {self.upper}")

    @property
    def support(self) -> tuple[float, float]:
        return -1.0, self.upper

    @property
    def width(self) -> float:
        return 1.0 + self.upper

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        # strictly inside (-1, upper] because u > 0
        return self.width * np.asarray(u) ** (1.0 / self.beta) - 1.0

    def negative_moment(self, alpha: float, scale: float = 1.0) -> float:
        w = self.width
        if scale == 1.0:
            if self.beta <= alpha:
                return math.inf
            return self.beta / (self.beta - alpha) * w ** (-alpha)
        if scale * -1.0 <= -1.0:
            raise ValueError("scaled jumps reach -1; negative moment undefined")
        dens = lambda v: self.beta * v ** (self.beta - 1) / w**self.beta
        val, _ = integrate.quad(lambda v: (1 + scale * (v - 1)) ** (-alpha) * dens(v), 0.0, w)
        return val

    def truncated_moment(self, power: float, a: float) -> float:
        hi = min(self.width, 1.0 - a)
        if self.beta <= power:
            return math.inf
        return self.beta / (self.beta - power) * hi ** (self.beta - power) / self.width**self.beta


JumpLaw = DegenerateJump | UniformJump | BoundaryPowerJump


# -- assets -------------------------------------------------------------------


@dataclass(frozen=True)
class CirParams:
    kappa: float
    theta: float
    delta: float
    v0: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0):
            raise ValueError("CIR needs kappa > 0 and theta > 0")
        if self.delta < 0 or self.v0 < 0:
            raise ValueError("CIR needs delta >= 0 and v0 >= 0")

    def mean(self, t):
        return self.theta + (self.v0 - self.theta) * np.exp(-self.kappa * np.asarray(t))


@dataclass(frozen=True)
class GBM:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"volatility must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class ExpLevy:
    drift: float
    sigma: float
    jump_rate: float
    jump_law: JumpLaw | None = None

    def __post_init__(self):
        if self.sigma < 0 or self.jump_rate < 0:
            raise ValueError("ExpLevy needs sigma >= 0 and jump_rate >= 0")
        if self.jump_rate > 0 and self.jump_law is None:
            raise ValueError("a positive jump rate needs a jump law")


@dataclass(frozen=True)
class DiffusionSV:
    mu: float
    variance: CirParams


Asset = GBM | ExpLevy | DiffusionSV


@dataclass(frozen=True)
class MarketModel:
    rate: Rate = field(default_factory=lambda: ConstantRate(0.0))
    assets: tuple[Asset, ...] = ()

    @property
    def n_assets(self) -> int:
        return len(self.assets)


# -- simulation ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AssetDraws:
    n_paths: int
    owner: np.ndarray
    times: np.ndarray
    sizes: np.ndarray


def draw_asset_jumps(asset: Asset, rng: np.random.Generator, n_paths: int) -> AssetDraws:
    if not isinstance(asset, ExpLevy) or asset.jump_rate == 0:
        empty = np.zeros(0)
        return AssetDraws(n_paths, np.zeros(0, int), empty, empty)
    counts = rng.poisson(asset.jump_rate, size=n_paths)
    total = int(counts.sum())
    owner = np.repeat(np.arange(n_paths), counts)
    times = 1.0 - rng.random(total)
    sizes = asset.jump_law.from_uniform(1.0 - rng.random(total))
    assert np.all(sizes > -1.0), "asset jump <= -1"
    return AssetDraws(n_paths, owner, times, sizes)


def _cir_full_truncation(params: CirParams, dt: np.ndarray, normals: np.ndarray) -> np.ndarray:
    n = normals.shape[0]
    v = np.empty((n, dt.size + 1))
    v[:, 0] = params.v0
    cur = np.full(n, float(params.v0))
    sq = np.sqrt(dt)
    for i in range(dt.size):
        pos = np.maximum(cur, 0.0)
        cur = cur + params.kappa * (params.theta - pos) * dt[i] + params.delta * np.sqrt(pos) * sq[i] * normals[:, i]
        v[:, i + 1] = cur
    return np.maximum(v, 0.0)


def asset_path(
    asset: Asset,
    times: np.ndarray,
    draws: AssetDraws,
    rng_diffusion: np.random.Generator,
    rng_variance: np.random.Generator | None = None,
) -> tuple[SamplePath, np.ndarray | None]:
    """Batch return path ``U`` and, for stochastic volatility, the variance at nodes."""
    dt = np.diff(times)
    n = draws.n_paths
    shape = (n, dt.size)
    variance = None
    if isinstance(asset, GBM):
        drift, vol2 = asset.mu * dt, asset.sigma**2 * dt
        noise = asset.sigma * np.sqrt(dt) * rng_diffusion.standard_normal(shape) if asset.sigma > 0 else 0.0
        cont, qv = drift + noise, np.broadcast_to(vol2, shape)
    elif isinstance(asset, ExpLevy):
        drift, vol2 = asset.drift * dt, asset.sigma**2 * dt
        noise = asset.sigma * np.sqrt(dt) * rng_diffusion.standard_normal(shape) if asset.sigma > 0 else 0.0
        cont, qv = drift + noise, np.broadcast_to(vol2, shape)
    elif isinstance(asset, DiffusionSV):
        variance = _cir_full_truncation(asset.variance, dt, rng_variance.standard_normal(shape))
        qv = variance[:, :-1] * dt
        cont = asset.mu * dt + np.sqrt(qv) * rng_diffusion.standard_normal(shape)
    else:
        raise TypeError(f"unsupported asset model {type(asset).__name__}")
    jumps = place_jumps(times, n, draws.owner, draws.times, draws.sizes)
    return SamplePath.from_increments(times, np.broadcast_to(cont, shape), jumps, qv), variance


def simulate_asset_return_increments(asset: Asset, grid: np.ndarray, seed: int, k: int = 0) -> SamplePath:
    """Single-path return increments of asset ``k`` on ``grid``.

    The grid must contain the asset's jump times drawn from the same seed.
    """
    grid = np.asarray(grid, dtype=float)
    tj, td, tv = asset_stream_tags(k)
    draws = draw_asset_jumps(asset, stream(seed, 0, tj), 1)
    node_indices(grid, draws.times)
    path, _ = asset_path(asset, grid, draws, stream(seed, 0, td), stream(seed, 0, tv))
    return path.path(0)


def simulate_cir_variance(params: CirParams, grid: np.ndarray, seed: int) -> np.ndarray:
    """Full-truncation Euler path of the CIR variance, clipped at zero."""
    grid = np.asarray(grid, dtype=float)
    dt = np.diff(grid)
    normals = stream(seed, 0, asset_stream_tags(0)[2]).standard_normal((1, dt.size))
    return _cir_full_truncation(params, dt, normals)[0]


def cir_exponential_moment_horizon(u: float, kappa: float, delta: float) -> float:
    """Supremum of horizons ``t`` with ``E exp(u int_0^t V ds) < inf``.

    Returns ``math.inf`` when the moment is finite for every ``t``
    (``u <= kappa^2 / (2 delta^2)``), otherwise the explosion time
    ``t* = 2 / g * (pi + arctan(-g / kappa))`` with ``g = sqrt(2 delta^2 u - kappa^2)``.
    """
    if not (u > 0 and kappa > 0 and delta > 0):
        raise ValueError("u, kappa and delta must all be positive")
    if u <= kappa**2 / (2 * delta**2):
        return math.inf
    g = math.sqrt(2 * delta**2 * u - kappa**2)
    return 2.0 / g * (math.pi + math.atan(-g / kappa))
