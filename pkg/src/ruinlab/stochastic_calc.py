"""Path-level stochastic calculus on merged time grids.

A :class:`SamplePath` stores a semimartingale sampled at the nodes
``0 = t_0 < ... < t_M = 1``.  Cell ``i`` is the interval ``(t_{i-1}, t_i]``;
its increment is split into a continuous part (``cont``) and a jump placed
exactly at the right node (``jumps``).  ``qv`` holds the continuous quadratic
variation accumulated over each cell, computed from model parameters rather
than from squared increments.

The trailing axis is always time, so a single path has arrays of shape
``(M,)`` / ``(M + 1,)`` and a batch of ``B`` paths sharing one grid has shape
``(B, M)`` / ``(B, M + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "ConsistencyError",
    "JumpConditionError",
    "RuinCheck",
    "SamplePath",
    "make_grid",
    "node_indices",
    "place_jumps",
    "reciprocal",
    "ruin_indicator",
    "solve_reserve",
    "stochastic_exponential",
    "stochastic_integral",
    "verify_sde_residual",
]


class JumpConditionError(ValueError):
    """A jump of size <= -1 makes the stochastic exponential non-positive."""


class ConsistencyError(RuntimeError):
    """Two representations of the same quantity disagree."""


def make_grid(mesh: float, *jump_times: np.ndarray) -> np.ndarray:
    """Uniform grid of step ``<= mesh`` on [0, 1], merged with exact jump times."""
    if not 0 < mesh <= 1:
        raise ValueError(f"mesh must lie in (0, 1], got {mesh}")
    n_cells = int(np.ceil(1.0 / mesh - 1e-9))
    parts = [np.linspace(0.0, 1.0, n_cells + 1)]
    for jt in jump_times:
        jt = np.asarray(jt, dtype=float).ravel()
        if jt.size and (jt.min() <= 0.0 or jt.max() > 1.0):
            raise ValueError("jump times must lie in (0, 1]")
        parts.append(jt)
    return np.unique(np.concatenate(parts))


def node_indices(times: np.ndarray, jump_times: np.ndarray) -> np.ndarray:
    """Node index of every jump time; each time must be an exact grid node."""
    jump_times = np.asarray(jump_times, dtype=float)
    idx = np.searchsorted(times, jump_times)
    idx = np.minimum(idx, len(times) - 1)
    if jump_times.size and not np.array_equal(times[idx], jump_times):
        bad = jump_times[times[idx] != jump_times][0]
        raise ValueError(f"grid is missing jump time {bad!r}")
    return idx


def place_jumps(
    times: np.ndarray,
    n_paths: int | None,
    owner: np.ndarray | None,
    jump_times: np.ndarray,
    sizes: np.ndarray,
) -> np.ndarray:
    """Scatter jumps onto the per-cell jump array of shape ``(n_paths, M)``.

    With ``n_paths=None`` a single path of shape ``(M,)`` is produced and
    ``owner`` is ignored.
    """
    cells = node_indices(times, jump_times) - 1
    if n_paths is None:
        out = np.zeros(len(times) - 1)
        np.add.at(out, cells, sizes)
    else:
        out = np.zeros((n_paths, len(times) - 1))
        np.add.at(out, (owner, cells), sizes)
    return out


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Grid sample of a semimartingale.

    ``values[..., i]`` is the process at node ``t_i``; ``cont[..., i - 1]`` and
    ``jumps[..., i - 1]`` decompose the increment over cell ``i``.
    """

    times: np.ndarray
    cont: np.ndarray
    jumps: np.ndarray
    qv: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = self.times
        if t.ndim != 1 or t.size < 2:
            raise ValueError("times must be a 1-d grid with at least two nodes")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must increase strictly from 0 to 1")
        m = t.size - 1
        for name in ("cont", "jumps", "qv"):
            if getattr(self, name).shape[-1] != m:
                raise ValueError(f"{name} must have {m} cells on its last axis")
        if self.values.shape[-1] != m + 1:
            raise ValueError(f"values must have {m + 1} nodes on its last axis")

    @classmethod
    def from_increments(cls, times, cont, jumps=None, qv=None, start=0.0) -> "SamplePath":
        times = np.asarray(times, dtype=float)
        cont = np.asarray(cont, dtype=float)
        jumps = np.zeros_like(cont) if jumps is None else np.asarray(jumps, dtype=float)
        cont, jumps = np.broadcast_arrays(cont, jumps)
        qv = np.zeros(cont.shape) if qv is None else np.broadcast_to(np.asarray(qv, dtype=float), cont.shape)
        start = np.broadcast_to(np.asarray(start, dtype=float), cont.shape[:-1])
        values = np.concatenate([start[..., None], start[..., None] + np.cumsum(cont + jumps, axis=-1)], axis=-1)
        return cls(times, np.array(cont), np.array(jumps), np.array(qv), values)

    @classmethod
    def constant(cls, times, value: float = 1.0) -> "SamplePath":
        times = np.asarray(times, dtype=float)
        zeros = np.zeros(times.size - 1)
        return cls(times, zeros, zeros, zeros, np.full(times.size, float(value)))

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def n_cells(self) -> int:
        return self.times.size - 1

    @cached_property
    def left_limits(self) -> np.ndarray:
        """Values just before the jump at each node ``t_1 .. t_M``."""
        return self.values[..., 1:] - self.jumps

    def path(self, k: int) -> "SamplePath":
        """Extract path ``k`` from a batch."""
        return SamplePath(self.times, self.cont[k], self.jumps[k], self.qv[k], self.values[k])


def _same_grid(a: SamplePath, b: SamplePath) -> None:
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ValueError("paths live on different grids")


def stochastic_exponential(z: SamplePath) -> SamplePath:
    """Doléans-Dade exponential of ``z``, exact for drift and pure-jump parts.

    Per cell the log-factor is ``cont - qv / 2 + log(1 + jump)``.
    """
    bad = z.jumps <= -1.0
    if np.any(bad):
        pos = tuple(int(i) for i in np.argwhere(bad)[0])
        raise JumpConditionError(
            f"jump {float(z.jumps[pos])!r} <= -1 at node t={float(z.times[pos[-1] + 1])!r} (index {pos})"
        )
    cont_factor = z.cont - 0.5 * z.qv
    log_e = np.cumsum(cont_factor + np.log1p(z.jumps), axis=-1)
    start = np.zeros(log_e.shape[:-1] + (1,))
    values = np.exp(np.concatenate([start, log_e], axis=-1))
    prev = values[..., :-1]
    left = prev * np.exp(cont_factor)
    return SamplePath(z.times, left - prev, left * z.jumps, prev**2 * z.qv, values)


def reciprocal(e: SamplePath) -> SamplePath:
    """The path ``1 / e`` for a strictly positive ``e``."""
    if np.any(e.values <= 0):
        raise JumpConditionError("reciprocal of a non-positive path")
    values = 1.0 / e.values
    prev = values[..., :-1]
    left = 1.0 / e.left_limits
    qv = prev**2 * e.qv / e.values[..., :-1] ** 2
    return SamplePath(e.times, left - prev, values[..., 1:] - left, qv, values)


def stochastic_integral(integrand: SamplePath, integrator: SamplePath) -> SamplePath:
    """Left-point integral ``int H_{s-} dY_s`` on the shared grid.

    The continuous increment of cell ``i`` is weighted by ``H(t_{i-1})``;
    a jump at node ``t_i`` is weighted by the left limit ``H(t_i-)``.
    """
    _same_grid(integrand, integrator)
    h_prev = integrand.values[..., :-1]
    h_left = integrand.left_limits
    cont = h_prev * integrator.cont
    jumps = h_left * integrator.jumps
    return SamplePath.from_increments(integrator.times, cont, jumps, h_prev**2 * integrator.qv)


def _reserve_parts(x, eps, exp_z, y):
    if x <= 0:
        raise ValueError(f"initial capital must be positive, got {x}")
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    integral = stochastic_integral(reciprocal(exp_z), y)
    return integral


def solve_reserve(x: float, eps: float, exp_z: SamplePath, y: SamplePath) -> SamplePath:
    """Explicit solution ``X = E(Z) (x + eps * int dY / E(Z)_-)`` on the grid."""
    _same_grid(exp_z, y)
    integral = _reserve_parts(x, eps, exp_z, y)
    return _reserve_from_integral(x, eps, exp_z, y, integral)


def _reserve_from_integral(x, eps, exp_z, y, integral):
    inner = x + eps * integral.values
    values = exp_z.values * inner
    inner_left = inner[..., 1:] - eps * integral.jumps
    left = exp_z.left_limits * inner_left
    prev = values[..., :-1]
    qv = inner[..., :-1] ** 2 * exp_z.qv + eps**2 * y.qv
    return SamplePath(exp_z.times, left - prev, values[..., 1:] - left, qv, values)


@dataclass(frozen=True, eq=False)
class RuinCheck:
    """Ruin flags from the reserve itself and from the integral threshold."""

    ruined: np.ndarray
    min_reserve: np.ndarray
    min_integral: np.ndarray

    @property
    def any(self) -> bool:
        return bool(np.any(self.ruined))


def ruin_indicator(x: float, eps: float, exp_z: SamplePath, y: SamplePath) -> RuinCheck:
    """Finite-time ruin flag per path, computed two independent ways.

    Ruin means ``min_t X_t < 0``; equivalently ``min_t I_t < -x / eps`` with
    ``I = int dY / E(Z)_-``.  The two are compared path by path.
    """
    _same_grid(exp_z, y)
    integral = _reserve_parts(x, eps, exp_z, y)
    reserve = _reserve_from_integral(x, eps, exp_z, y, integral)
    min_reserve = reserve.values.min(axis=-1)
    min_integral = integral.values.min(axis=-1)
    direct = min_reserve < 0
    if eps == 0:
        via_integral = np.zeros_like(direct)
    else:
        via_integral = min_integral < -x / eps
    if not np.array_equal(direct, via_integral):
        n_bad = int(np.count_nonzero(direct != via_integral))
        raise ConsistencyError(f"reserve and integral ruin flags disagree on {n_bad} path(s)")
    return RuinCheck(via_integral, min_reserve, min_integral)


def verify_sde_residual(
    x: float, eps: float, x_path: SamplePath, z_path: SamplePath, y_path: SamplePath
) -> np.ndarray | float:
    """Max over nodes of ``|X_t - x - sum X_- dZ - eps Y_t|`` (left-point sums)."""
    _same_grid(x_path, z_path)
    _same_grid(x_path, y_path)
    incr = x_path.values[..., :-1] * z_path.cont + x_path.left_limits * z_path.jumps
    zeros = np.zeros(incr.shape[:-1] + (1,))
    driven = np.concatenate([zeros, np.cumsum(incr, axis=-1)], axis=-1)
    residual = x_path.values - (x + driven + eps * y_path.values)
    out = np.abs(residual).max(axis=-1)
    return float(out) if out.ndim == 0 else out
