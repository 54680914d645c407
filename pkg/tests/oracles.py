"""Independent reference computations shared by several test modules."""

import math

import numpy as np
from scipy import integrate


def riccati_blowup(u: float, kappa: float, delta: float, t_max: float = 50.0) -> float:
    """Explosion time of psi' = u - kappa psi + delta^2 psi^2 / 2, psi(0) = 0.

    ``E exp(u int_0^t V)`` is finite exactly while psi is; returns inf when no
    blow-up happens before ``t_max``.
    """
    big = 1e9

    def rhs(_, y):
        return [u - kappa * y[0] + 0.5 * delta**2 * y[0] ** 2]

    def hit(_, y):
        return y[0] - big

    hit.terminal = True
    sol = integrate.solve_ivp(rhs, (0.0, t_max), [0.0], events=hit, rtol=1e-11, atol=1e-12, max_step=0.01)
    if sol.t_events[0].size == 0:
        return math.inf
    # past psi = big the remaining time is about 2 / (delta^2 big)
    return float(sol.t_events[0][0]) + 2.0 / (delta**2 * big)


def quad_constant(rho_fn, alpha):
    """``int_0^1 E E(Z)_t^-alpha dt`` for a given exponent function via quadrature."""
    val, _ = integrate.quad(lambda t: math.exp(rho_fn(alpha) * t), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    return val


def gbm_integrand_constant(alpha, r, sigma, pi=1.0, mu=None):
    """Quadrature of ``E E(Z)_t^-alpha`` built from the lognormal moment directly."""
    mu = r if mu is None else mu
    drift = (1 - pi) * r + pi * mu
    s2 = (pi * sigma) ** 2

    def moment(t):
        # log E(Z)_t ~ N((drift - s2/2) t, s2 t); E exp(-alpha N(m, v)) = exp(-alpha m + alpha^2 v / 2)
        m, v = (drift - 0.5 * s2) * t, s2 * t
        return math.exp(-alpha * m + 0.5 * alpha**2 * v)

    val, _ = integrate.quad(moment, 0.0, 1.0, epsabs=0, epsrel=1e-13)
    return val


def grid_argmin(fn, lo=-2.0, hi=2.0, step=1e-4):
    grid = np.arange(lo, hi + step / 2, step)
    return float(grid[np.argmin(fn(grid))])
