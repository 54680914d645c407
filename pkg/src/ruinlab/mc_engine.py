"""Monte Carlo estimation of finite-time ruin probabilities.

Paths are simulated block by block (see :mod:`ruinlab.rng`).  All paths of a
block share one grid: the uniform mesh merged with every jump time drawn in
the block, so each path sees its own jumps at exact nodes.  Block results are
reassembled in block order, which makes every output independent of the
number of worker processes.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np
from scipy import stats

from . import rng as _rng
from .asymptotics import (
    AsymptoticConstant,
    asymptotic_ruin_approx,
    estimate_constant_mc,
    levy_constant,
)
from .levy_models import ClaimsProcessSpec, ParetoClaims, claims_path, draw_claims
from .market_models import (
    DiffusionSV,
    GBM,
    MarketModel,
    asset_path,
    draw_asset_jumps,
    rate_path,
)
from .stochastic_calc import SamplePath, make_grid, ruin_indicator, stochastic_exponential
from .strategies import (
    AsymptoticallyOptimal,
    ConstantStrategy,
    FeedbackState,
    FeedbackStrategy,
    asymptotically_optimal_pi,
    build_Z,
    optimal_fractions,
    validate_strategy,
)

__all__ = [
    "DEFAULT_MESH",
    "BlockPaths",
    "ConvergenceRow",
    "ConvergenceTable",
    "RuinEstimate",
    "RuinProblem",
    "ZSampler",
    "asymptotic_constant",
    "convergence_study",
    "effective_workers",
    "estimate_ruin_probability",
    "estimate_ruin_probability_is",
    "family_study",
    "simulate_block",
]

logger = logging.getLogger(__name__)

DEFAULT_MESH = 2.0**-10
_EXACT_CI_BELOW = 30
_Z95 = float(stats.norm.ppf(0.975))


@dataclass(frozen=True)
class RuinProblem:
    claims: ClaimsProcessSpec
    market: MarketModel
    strategy: ConstantStrategy | FeedbackStrategy | AsymptoticallyOptimal

    def __post_init__(self):
        validate_strategy(self.strategy, self.market)


@dataclass(frozen=True, eq=False)
class BlockPaths:
    times: np.ndarray
    y: SamplePath
    z: SamplePath
    exp_z: SamplePath
    weights: np.ndarray


def effective_workers(requested: int | None) -> int:
    """Requested worker count, capped by ``RUINLAB_THREADS`` when set."""
    n = 1 if requested is None else int(requested)
    cap = os.environ.get("RUINLAB_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _feedback_Z(
    strategy: FeedbackStrategy,
    x: float,
    eps: float,
    market: MarketModel,
    times: np.ndarray,
    rate: SamplePath,
    assets: list[SamplePath],
    y: SamplePath,
) -> SamplePath:
    """Step through the grid, feeding the rule left limits of the reserve."""
    n, m = y.cont.shape
    k = len(assets)
    r_left = market.rate.at(times[:-1])
    cz = np.empty((n, m))
    jz = np.empty((n, m))
    qz = np.empty((n, m))
    log_e = np.zeros(n)
    e_prev = np.ones(n)
    integral = np.zeros(n)
    x_node = np.full(n, float(x))
    log_s = np.zeros((n, k))
    prices = np.ones((n, k))
    y_node = np.zeros(n)
    for i in range(m):
        state = FeedbackState(x_node, np.full(n, r_left[i]), prices, eps * y_node)
        pis = np.asarray(strategy.rule(state), dtype=float).reshape(n, k)
        c = (1.0 - pis.sum(axis=1)) * rate.cont[i]
        j = np.zeros(n)
        q = np.zeros(n)
        for a in range(k):
            c = c + pis[:, a] * assets[a].cont[:, i]
            j = j + pis[:, a] * assets[a].jumps[:, i]
            q = q + pis[:, a] ** 2 * assets[a].qv[:, i]
        cz[:, i], jz[:, i], qz[:, i] = c, j, q
        if np.any(j <= -1.0):
            raise ValueError(f"feedback rule produced a Z jump <= -1 at t={times[i + 1]!r}")
        e_left = e_prev * np.exp(c - 0.5 * q)
        integral = integral + y.cont[:, i] / e_prev + y.jumps[:, i] / e_left
        log_e = log_e + (c - 0.5 * q) + np.log1p(j)
        e_prev = np.exp(log_e)
        x_node = e_prev * (x + eps * integral)
        for a in range(k):
            log_s[:, a] += assets[a].cont[:, i] - 0.5 * assets[a].qv[:, i] + np.log1p(assets[a].jumps[:, i])
        prices = np.exp(log_s)
        y_node = y_node + y.cont[:, i] + y.jumps[:, i]
    return SamplePath.from_increments(times, cz, jz, qz)


def simulate_block(
    problem: RuinProblem,
    block: int,
    n: int,
    *,
    seed: int,
    mesh: float = DEFAULT_MESH,
    tilt: float = 0.0,
    x: float | None = None,
    eps: float | None = None,
    include_claims: bool = True,
) -> BlockPaths:
    """Simulate every driver of one block and assemble ``Y``, ``Z`` and ``E(Z)``."""
    claims = problem.claims
    if not include_claims:
        claims = ClaimsProcessSpec(0.0, 0.0, 0.0, claims.claim_law)
    draws = draw_claims(claims, _rng.stream(seed, block, _rng.STREAM_CLAIMS), n, tilt)
    market = problem.market
    asset_draws = []
    for k, asset in enumerate(market.assets):
        tj, _, _ = _rng.asset_stream_tags(k)
        asset_draws.append(draw_asset_jumps(asset, _rng.stream(seed, block, tj), n))
    times = make_grid(mesh, draws.times, *(d.times for d in asset_draws))
    y = claims_path(claims, times, draws, _rng.stream(seed, block, _rng.STREAM_CLAIMS_DIFFUSION))
    asset_paths, variances = [], []
    for k, (asset, d) in enumerate(zip(market.assets, asset_draws)):
        _, td, tv = _rng.asset_stream_tags(k)
        path, var = asset_path(asset, times, d, _rng.stream(seed, block, td), _rng.stream(seed, block, tv))
        asset_paths.append(path)
        variances.append(var)
    rate = rate_path(market.rate, times)
    strategy = problem.strategy
    if isinstance(strategy, FeedbackStrategy):
        if x is None or eps is None:
            raise ValueError("feedback strategies need x and eps to build Z")
        z = _feedback_Z(strategy, x, eps, market, times, rate, asset_paths, y)
    elif isinstance(strategy, AsymptoticallyOptimal):
        z = build_Z(optimal_fractions(strategy, market, times, variances[0]), rate, asset_paths)
    else:
        z = build_Z(strategy, rate, asset_paths)
    if z.cont.ndim == 1:
        # deterministic Z: give every path its own copy
        shape = (n, z.cont.size)
        z = SamplePath.from_increments(
            times, np.broadcast_to(z.cont, shape), np.broadcast_to(z.jumps, shape), np.broadcast_to(z.qv, shape)
        )
    exp_z = stochastic_exponential(z)
    if tilt:
        log_lr = np.log(claims.claim_law.likelihood_ratio(draws.sizes, tilt))
        weights = np.exp(np.bincount(draws.owner, weights=log_lr, minlength=n))
    else:
        weights = np.ones(n)
    return BlockPaths(times, y, z, exp_z, weights)


# -- ruin estimation --------------------------------------------------------------


@dataclass(frozen=True)
class RuinEstimate:
    eps: float
    x: float
    n_paths: int
    p_hat: float
    ci_halfwidth: float
    normalized_ratio: float
    seed: int
    ruin_count: int
    ci_low: float
    ci_high: float
    std_error: float
    tilt: float = 0.0
    mean_weight: float = 1.0
    weight_se: float = 0.0


def _ruin_block(task, problem, x, eps, seed, mesh, tilt):
    block, n = task
    paths = simulate_block(problem, block, n, seed=seed, mesh=mesh, tilt=tilt, x=x, eps=eps)
    check = ruin_indicator(x, eps, paths.exp_z, paths.y)
    return check.ruined, paths.weights


def _map_blocks(fn, tasks, workers):
    workers = effective_workers(workers)
    if workers == 1 or len(tasks) == 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _summarize(ruined, weights, *, x, eps, seed, tail_mass, tilt) -> RuinEstimate:
    n = ruined.size
    count = int(np.count_nonzero(ruined))
    vals = np.where(ruined, weights, 0.0)
    p = float(np.mean(vals))
    if tilt == 0:
        se = math.sqrt(p * (1 - p) / n)
        if count < _EXACT_CI_BELOW:
            ci = stats.binomtest(count, n).proportion_ci(0.95, method="exact")
            lo, hi = float(ci.low), float(ci.high)
        else:
            lo, hi = max(0.0, p - _Z95 * se), min(1.0, p + _Z95 * se)
    else:
        se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        lo, hi = max(0.0, p - _Z95 * se), p + _Z95 * se
    mean_w = float(np.mean(weights))
    w_se = float(np.std(weights, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    ratio = p / tail_mass if tail_mass > 0 else math.nan
    return RuinEstimate(
        eps=eps, x=x, n_paths=n, p_hat=p, ci_halfwidth=0.5 * (hi - lo), normalized_ratio=ratio,
        seed=seed, ruin_count=count, ci_low=lo, ci_high=hi, std_error=se,
        tilt=tilt, mean_weight=mean_w, weight_se=w_se,
    )


def _estimate(problem, x, eps, n_paths, seed, mesh, tilt, workers, block_size) -> RuinEstimate:
    if not x > 0:
        raise ValueError(f"initial capital must be positive, got {x}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    tasks = _rng.block_layout(n_paths, block_size)
    fn = partial(_ruin_block, problem=problem, x=x, eps=eps, seed=seed, mesh=mesh, tilt=tilt)
    results = _map_blocks(fn, tasks, workers)
    ruined = np.concatenate([r for r, _ in results])
    weights = np.concatenate([w for _, w in results])
    tail_mass = problem.claims.levy_tail(1.0 / eps) if eps > 0 else 0.0
    return _summarize(ruined, weights, x=x, eps=eps, seed=seed, tail_mass=tail_mass, tilt=tilt)


def estimate_ruin_probability(
    claims: ClaimsProcessSpec,
    market: MarketModel,
    strategy,
    x: float,
    eps: float,
    n_paths: int,
    seed: int,
    *,
    mesh: float = DEFAULT_MESH,
    workers: int | None = 1,
    block_size: int = _rng.DEFAULT_BLOCK_SIZE,
) -> RuinEstimate:
    """Plain Monte Carlo estimate of ``P(min_{t <= 1} X^eps_t < 0)``."""
    problem = RuinProblem(claims, market, strategy)
    return _estimate(problem, x, eps, n_paths, seed, mesh, 0.0, workers, block_size)


def estimate_ruin_probability_is(
    claims: ClaimsProcessSpec,
    market: MarketModel,
    strategy,
    x: float,
    eps: float,
    n_paths: int,
    seed: int,
    tilt: float,
    *,
    mesh: float = DEFAULT_MESH,
    workers: int | None = 1,
    block_size: int = _rng.DEFAULT_BLOCK_SIZE,
) -> RuinEstimate:
    """Importance-sampled estimate drawing claims from Pareto(alpha - tilt).

    Each path carries the product of per-claim likelihood ratios.  Arrival
    times are untouched, so ``tilt=0`` reproduces the plain estimator.
    """
    if not isinstance(claims.claim_law, ParetoClaims):
        raise ValueError("importance sampling needs Pareto claims")
    if not 0 <= tilt < claims.claim_law.alpha:
        raise ValueError(f"tilt must lie in [0, alpha), got {tilt}")
    problem = RuinProblem(claims, market, strategy)
    return _estimate(problem, x, eps, n_paths, seed, mesh, float(tilt), workers, block_size)


# -- asymptotic constants via the engine --------------------------------------------


@dataclass(frozen=True)
class ZSampler:
    """Picklable ``(block, n) -> E(Z)`` sampler for :func:`estimate_constant_mc`."""

    problem: RuinProblem
    seed: int
    mesh: float = DEFAULT_MESH
    x: float | None = None
    eps: float | None = None

    def __call__(self, block: int, n: int) -> SamplePath:
        feedback = isinstance(self.problem.strategy, FeedbackStrategy)
        paths = simulate_block(
            self.problem, block, n, seed=self.seed, mesh=self.mesh,
            x=self.x, eps=self.eps, include_claims=feedback,
        )
        return paths.exp_z


def _closed_form(market: MarketModel, strategy, alpha: float) -> AsymptoticConstant | None:
    if not market.rate.is_constant:
        return None
    if isinstance(strategy, ConstantStrategy):
        weights = strategy.weights
    elif isinstance(strategy, AsymptoticallyOptimal) and isinstance(market.assets[0], GBM):
        a = market.assets[0]
        weights = (asymptotically_optimal_pi(a.mu, float(market.rate.at(0.0).item()), a.sigma, strategy.alpha),)
    else:
        return None
    if any(isinstance(a, DiffusionSV) for a in market.assets):
        return None
    return levy_constant(market, weights, alpha)


def _sampler_blocks(sampler, alpha, blocks):
    return estimate_constant_mc(sampler, alpha, [blocks])


def asymptotic_constant(
    problem: RuinProblem,
    alpha: float,
    *,
    n_paths: int = 10_000,
    seed: int = 0,
    mesh: float = DEFAULT_MESH,
    x: float | None = None,
    eps: float | None = None,
    force_mc: bool = False,
    block_size: int = _rng.DEFAULT_BLOCK_SIZE,
) -> AsymptoticConstant:
    """``K`` in closed form when ``Z`` is Lévy, otherwise by Monte Carlo."""
    if not force_mc:
        closed = _closed_form(problem.market, problem.strategy, alpha)
        if closed is not None:
            return closed
    sampler = ZSampler(problem, seed, mesh, x, eps)
    return estimate_constant_mc(sampler, alpha, _rng.block_layout(n_paths, block_size))


# -- convergence studies ------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    eps: float
    estimate: RuinEstimate
    approximation: float
    limit: float

    @property
    def ratio_to_limit(self) -> float:
        return self.estimate.normalized_ratio / self.limit

    @property
    def abs_error(self) -> float:
        return abs(self.estimate.normalized_ratio - self.limit)

    @property
    def ratio_halfwidth(self) -> float:
        """CI half-width of the normalized ratio."""
        return self.estimate.ci_halfwidth * self.estimate.normalized_ratio / self.estimate.p_hat if self.estimate.p_hat > 0 else math.inf


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[ConvergenceRow, ...]
    K: AsymptoticConstant
    x: float
    alpha: float
    label: str = ""

    def __post_init__(self):
        eps = [row.eps for row in self.rows]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps ladder must be strictly decreasing")


def convergence_study(
    problem: RuinProblem,
    x: float,
    eps_ladder: Sequence[float],
    n_paths: int,
    seed: int,
    *,
    K: AsymptoticConstant | None = None,
    tilt: float = 0.0,
    mesh: float = DEFAULT_MESH,
    workers: int | None = 1,
    block_size: int = _rng.DEFAULT_BLOCK_SIZE,
    label: str = "",
) -> ConvergenceTable:
    """Normalized ruin ratios down an eps ladder against the limit ``x^-alpha K``."""
    ladder = [float(e) for e in eps_ladder]
    if any(b >= a for a, b in zip(ladder, ladder[1:])) or min(ladder) <= 0:
        raise ValueError("eps ladder must be positive and strictly decreasing")
    alpha = problem.claims.alpha
    if alpha is None:
        raise ValueError("convergence studies need a regularly varying claim law")
    feedback = isinstance(problem.strategy, FeedbackStrategy)
    if K is None and not feedback:
        K = asymptotic_constant(problem, alpha, seed=seed, mesh=mesh, block_size=block_size)
    rows = []
    for eps in ladder:
        k_eps = K if K is not None else asymptotic_constant(
            problem, alpha, seed=seed, mesh=mesh, x=x, eps=eps, block_size=block_size
        )
        est = _estimate(problem, x, eps, n_paths, seed, mesh, tilt, workers, block_size)
        approx = asymptotic_ruin_approx(x, eps, alpha, problem.claims.levy_tail, k_eps)
        rows.append(ConvergenceRow(eps, est, approx, x ** (-alpha) * k_eps.value))
        logger.info("eps=%g p_hat=%.6g ratio=%.6g limit=%.6g", eps, est.p_hat, est.normalized_ratio, rows[-1].limit)
    return ConvergenceTable(tuple(rows), K if K is not None else k_eps, x, alpha, label)


def family_study(
    claims: ClaimsProcessSpec,
    market: MarketModel,
    strategies: Sequence[tuple[str, object]],
    x: float,
    eps_ladder: Sequence[float],
    n_paths: int,
    seed: int,
    **kwargs,
) -> dict[str, ConvergenceTable]:
    """One convergence table per labelled strategy, all on the same seeds."""
    return {
        label: convergence_study(RuinProblem(claims, market, s), x, eps_ladder, n_paths, seed, label=label, **kwargs)
        for label, s in strategies
    }
