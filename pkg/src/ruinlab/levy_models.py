"""Premiums-minus-claims Lévy process and its heavy left tail.

The claims process is ``Y_t = c t + sigma_Y W_t - sum_{k <= N_t} C_k`` with
``N`` a Poisson process of rate ``lambda_c`` and i.i.d. positive claims
``C_k``.  Its Lévy measure has left tail ``nu(-inf, -u) = lambda_c P(C > u)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import STREAM_CLAIMS, STREAM_CLAIMS_DIFFUSION, stream
from .stochastic_calc import SamplePath, node_indices, place_jumps

__all__ = [
    "ClaimDraws",
    "ClaimsProcessSpec",
    "LevyMeasureTail",
    "ParetoClaims",
    "UniformClaims",
    "claims_path",
    "draw_claims",
    "sample_Y_increments",
    "sample_claim_jumps",
    "tail",
]


@dataclass(frozen=True)
class ParetoClaims:
    """Pareto law with survival ``(scale / u) ** alpha`` for ``u >= scale``."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"Pareto tail index must be positive, got {self.alpha}")
        if not self.scale > 0:
            raise ValueError(f"Pareto scale must be positive, got {self.scale}")

    @property
    def tail_index(self) -> float:
        return self.alpha

    @property
    def mean(self) -> float:
        if self.alpha <= 1:
            return math.inf
        return self.alpha * self.scale / (self.alpha - 1)

    def survival(self, u):
        u = np.asarray(u, dtype=float)
        out = np.where(u < self.scale, 1.0, (self.scale / np.maximum(u, self.scale)) ** self.alpha)
        return float(out) if out.ndim == 0 else out

    def cdf(self, u):
        return 1.0 - self.survival(u)

    def from_uniform(self, u: np.ndarray, tilt: float = 0.0) -> np.ndarray:
        """Inverse-CDF sample from ``u`` in (0, 1]; ``tilt`` lowers the index to ``alpha - tilt``."""
        return self.scale * np.asarray(u, dtype=float) ** (-1.0 / (self.alpha - tilt))

    def likelihood_ratio(self, sizes: np.ndarray, tilt: float) -> np.ndarray:
        """Density ratio of Pareto(alpha) to Pareto(alpha - tilt) at ``sizes``."""
        if tilt == 0:
            return np.ones_like(np.asarray(sizes, dtype=float))
        a = self.alpha
        return (a / (a - tilt)) * (np.asarray(sizes) / self.scale) ** (-tilt)


@dataclass(frozen=True)
class UniformClaims:
    """Bounded claims, uniform on ``[low, high]``; not heavy tailed."""

    low: float
    high: float

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ValueError(f"need 0 < low <= high, got [{self.low}, {self.high}]")

    @property
    def tail_index(self) -> None:
        return None

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    def survival(self, u):
        u = np.asarray(u, dtype=float)
        width = self.high - self.low
        if width == 0:
            out = np.where(u < self.low, 1.0, 0.0)
        else:
            out = np.clip((self.high - u) / width, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, u):
        return 1.0 - self.survival(u)

    def from_uniform(self, u: np.ndarray, tilt: float = 0.0) -> np.ndarray:
        if tilt != 0:
            raise ValueError("tilting is only defined for Pareto claims")
        return self.low + (self.high - self.low) * (1.0 - np.asarray(u, dtype=float))

    def likelihood_ratio(self, sizes, tilt):
        if tilt != 0:
            raise ValueError("tilting is only defined for Pareto claims")
        return np.ones_like(np.asarray(sizes, dtype=float))


ClaimLaw = ParetoClaims | UniformClaims


@dataclass(frozen=True)
class ClaimsProcessSpec:
    premium_drift: float
    diffusion_vol: float
    claim_intensity: float
    claim_law: ClaimLaw

    def __post_init__(self):
        if self.premium_drift < 0:
            raise ValueError(f"premium drift must be >= 0, got {self.premium_drift}")
        if self.diffusion_vol < 0:
            raise ValueError(f"diffusion vol must be >= 0, got {self.diffusion_vol}")
        # intensity 0 is a test-only degenerate case
        if self.claim_intensity < 0:
            raise ValueError(f"claim intensity must be >= 0, got {self.claim_intensity}")

    @property
    def alpha(self) -> float | None:
        return self.claim_law.tail_index

    @property
    def levy_tail(self) -> "LevyMeasureTail":
        return LevyMeasureTail(lambda u: tail(self, u), self.alpha)

    @property
    def mean_increment(self) -> float:
        """``E Y_1 = c - lambda_c E[C]``."""
        return self.premium_drift - self.claim_intensity * self.claim_law.mean


@dataclass(frozen=True)
class LevyMeasureTail:
    """``u -> nu(-inf, -u)`` together with its regular-variation index."""

    fn: Callable[[float], float]
    alpha: float | None

    def __call__(self, u: float) -> float:
        return self.fn(u)


def tail(spec: ClaimsProcessSpec, u: float) -> float:
    """Left-tail mass ``nu(-inf, -u) = lambda_c P(C > u)`` for ``u > 0``."""
    if not u > 0:
        raise ValueError(f"tail requires u > 0, got {u}")
    return spec.claim_intensity * float(spec.claim_law.survival(u))


@dataclass(frozen=True, eq=False)
class ClaimDraws:
    """Claims for a block of paths; ``owner[j]`` is the path of claim ``j``."""

    n_paths: int
    owner: np.ndarray
    times: np.ndarray
    uniforms: np.ndarray
    sizes: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.n_paths)


def draw_claims(spec: ClaimsProcessSpec, rng: np.random.Generator, n_paths: int, tilt: float = 0.0) -> ClaimDraws:
    """Draw counts, then arrival times, then size uniforms, in that order.

    Times never depend on ``tilt``, so tilted and untilted draws from the same
    stream share arrivals and uniforms and differ only in the mapped sizes.
    """
    counts = rng.poisson(spec.claim_intensity, size=n_paths) if spec.claim_intensity > 0 else np.zeros(n_paths, int)
    total = int(counts.sum())
    owner = np.repeat(np.arange(n_paths), counts)
    times = 1.0 - rng.random(total)
    uniforms = 1.0 - rng.random(total)
    sizes = spec.claim_law.from_uniform(uniforms, tilt)
    return ClaimDraws(n_paths, owner, times, uniforms, sizes)


def claims_path(
    spec: ClaimsProcessSpec,
    times: np.ndarray,
    draws: ClaimDraws,
    rng: np.random.Generator | None,
) -> SamplePath:
    """Batch path of ``Y`` on ``times`` (shape ``(n_paths, M)``)."""
    dt = np.diff(times)
    n = draws.n_paths
    cont = np.broadcast_to(spec.premium_drift * dt, (n, dt.size))
    qv = np.broadcast_to(spec.diffusion_vol**2 * dt, (n, dt.size))
    if spec.diffusion_vol > 0:
        cont = cont + spec.diffusion_vol * np.sqrt(dt) * rng.standard_normal((n, dt.size))
    jumps = place_jumps(times, n, draws.owner, draws.times, -draws.sizes)
    return SamplePath.from_increments(times, cont, jumps, qv)


def sample_claim_jumps(spec: ClaimsProcessSpec, seed: int) -> list[tuple[float, float]]:
    """Jumps ``(time, -size)`` of one path, sorted by time."""
    draws = draw_claims(spec, stream(seed, 0, STREAM_CLAIMS), 1)
    order = np.argsort(draws.times, kind="stable")
    return [(float(t), float(-s)) for t, s in zip(draws.times[order], draws.sizes[order])]


def sample_Y_increments(spec: ClaimsProcessSpec, grid: np.ndarray, seed: int) -> SamplePath:
    """Single path of ``Y`` on ``grid``; the grid must contain the jump times drawn from ``seed``."""
    grid = np.asarray(grid, dtype=float)
    draws = draw_claims(spec, stream(seed, 0, STREAM_CLAIMS), 1)
    node_indices(grid, draws.times)
    batch = claims_path(spec, grid, draws, stream(seed, 0, STREAM_CLAIMS_DIFFUSION))
    return batch.path(0)
