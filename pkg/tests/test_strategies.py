import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from oracles import grid_argmin, riccati_blowup
from ruinlab.market_models import (
    BoundaryPowerJump,
    CirParams,
    ConstantRate,
    DegenerateJump,
    DiffusionSV,
    ExpLevy,
    GBM,
    MarketModel,
    UniformJump,
    asset_path,
    draw_asset_jumps,
    rate_path,
)
from ruinlab.rng import stream
from ruinlab.stochastic_calc import make_grid
from ruinlab.strategies import (
    AsymptoticallyOptimal,
    ConstantStrategy,
    Verdict,
    asymptotically_optimal_pi,
    build_Z,
    check_exponential_moment_conditions,
    check_levy_moment_condition,
    check_no_short_selling,
    feedback_fractions,
    make_feedback,
    psi,
    validate_strategy,
)


def _paths(assets, grid, n, seed):
    out = []
    for k, a in enumerate(assets):
        d = draw_asset_jumps(a, stream(seed, 0, 16 + 4 * k), n)
        out.append(asset_path(a, grid, d, stream(seed, 0, 17 + 4 * k), stream(seed, 0, 18 + 4 * k))[0])
    return out


def test_bank_only_strategy_gives_integrated_rate():
    grid = make_grid(1 / 16)
    rate = rate_path(ConstantRate(0.03), grid)
    z = build_Z(ConstantStrategy((0.0,)), rate, _paths([GBM(0.1, 0.2)], grid, 3, 1))
    np.testing.assert_allclose(z.values, np.broadcast_to(0.03 * grid, (3, grid.size)), atol=1e-15)


def test_fully_invested_equals_asset_returns():
    grid = make_grid(1 / 16)
    (asset,) = _paths([GBM(0.1, 0.2)], grid, 4, 2)
    z = build_Z(ConstantStrategy((1.0,)), rate_path(ConstantRate(0.05), grid), [asset])
    np.testing.assert_array_equal(z.cont, asset.cont)
    np.testing.assert_array_equal(z.qv, asset.qv)


def test_half_half_replay():
    grid = make_grid(1 / 32)
    assets = _paths([GBM(0.1, 0.2), GBM(-0.05, 0.4)], grid, 5, 3)
    z = build_Z(ConstantStrategy((0.5, 0.5)), rate_path(ConstantRate(0.02), grid), assets)
    replay = 0.5 * assets[0].values + 0.5 * assets[1].values
    np.testing.assert_allclose(z.values, replay, atol=1e-14)
    np.testing.assert_allclose(z.qv, 0.25 * (assets[0].qv + assets[1].qv))


def test_jump_of_Z_is_weighted_asset_jump():
    a = ExpLevy(0.0, 0.0, 3.0, DegenerateJump(-0.4))
    d = draw_asset_jumps(a, stream(0, 0, 16), 2)
    grid = make_grid(1 / 8, d.times)
    path, _ = asset_path(a, grid, d, stream(0, 0, 17))
    z = build_Z(ConstantStrategy((0.25,)), rate_path(ConstantRate(0.0), grid), [path])
    np.testing.assert_allclose(z.jumps, 0.25 * path.jumps)


def test_fractions_sum_to_one():
    assert sum(ConstantStrategy((0.3, 0.9)).fractions) == pytest.approx(1.0)
    fb = make_feedback("threshold", 2, level=1.0, high=[0.2, 0.3], low=[0.0, 0.1])
    n, m = 7, 5
    reserve = np.linspace(0.5, 1.5, n)[:, None] * np.ones((1, m + 1))
    fr = feedback_fractions(fb, reserve, np.zeros((n, m + 1)), np.ones((n, m + 1, 2)), np.zeros((n, m + 1)))
    np.testing.assert_allclose(fr.sum(axis=-1), 1.0)


def test_feedback_is_predictable():
    fb = make_feedback("cushion", 1, multiplier=2.0, floor=0.5)
    n, m = 3, 6
    rng = np.random.default_rng(0)
    reserve = rng.uniform(0.6, 2.0, (n, m + 1))
    args = (np.zeros((n, m + 1)), np.ones((n, m + 1, 1)), np.zeros((n, m + 1)))
    base = feedback_fractions(fb, reserve, *args)
    i = 3
    bumped = reserve.copy()
    bumped[:, i] += 0.7
    after = feedback_fractions(fb, bumped, *args)
    # cells before i+1 unchanged; cell i+1 (index i) sees the bumped node
    np.testing.assert_array_equal(base[:, :i], after[:, :i])
    assert np.any(base[:, i] != after[:, i])
    np.testing.assert_array_equal(base[:, i + 1:], after[:, i + 1:])


def test_build_Z_refuses_unresolved_strategies():
    grid = make_grid(0.5)
    rate = rate_path(ConstantRate(0.0), grid)
    with pytest.raises(TypeError):
        build_Z(make_feedback("cushion", 1, multiplier=1.0, floor=0.0), rate, [])
    with pytest.raises(TypeError):
        build_Z(AsymptoticallyOptimal(2.0), rate, [])


def test_validation_rejects_incompatible_pairs():
    two = MarketModel(ConstantRate(0.0), (GBM(0.1, 0.2), GBM(0.1, 0.3)))
    with pytest.raises(ValueError):
        validate_strategy(AsymptoticallyOptimal(2.0), two)
    with pytest.raises(ValueError):
        validate_strategy(ConstantStrategy((0.5,)), two)
    jumpy = MarketModel(ConstantRate(0.0), (ExpLevy(0.0, 0.0, 1.0, DegenerateJump(-0.5)),))
    with pytest.raises(ValueError):
        validate_strategy(ConstantStrategy((2.0,)), jumpy)


# -- pi* -------------------------------------------------------------------------


def test_pi_star_examples():
    assert asymptotically_optimal_pi(0.05, 0.05, 0.2, 2.0) == 0.0
    val = asymptotically_optimal_pi(0.1, 0.05, 0.2, 2.0)
    assert val == pytest.approx(0.05 / 0.12, rel=1e-14)
    assert val == pytest.approx(grid_argmin(lambda p: psi(p, 0.1, 0.05, 0.2, 2.0)), abs=1e-4)
    r0 = asymptotically_optimal_pi(0.09, 0.0, 0.3, 1.0)
    assert r0 == pytest.approx(0.5)
    assert r0 == pytest.approx(grid_argmin(lambda p: psi(p, 0.09, 0.0, 0.3, 1.0)), abs=1e-4)


def test_pi_star_rejects_zero_vol():
    with pytest.raises(ValueError):
        asymptotically_optimal_pi(0.1, 0.05, 0.0, 2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.2, 0.3), st.floats(0.0, 0.1), st.floats(0.15, 0.6), st.floats(0.5, 4.0))
def test_pi_star_is_psi_argmin(mu, r, sigma, alpha):
    pi = asymptotically_optimal_pi(mu, r, sigma, alpha)
    if abs(pi) <= 2:
        assert pi == pytest.approx(grid_argmin(lambda p: psi(p, mu, r, sigma, alpha)), abs=1e-4)


# -- condition checks -------------------------------------------------------------------


def test_levy_condition_bounded_support_holds():
    rep = check_levy_moment_condition(UniformJump(-0.8, 1.0), 2.0, 2.0)
    assert rep.verdict is Verdict.HOLDS and rep.method == "bounded-support"
    assert check_levy_moment_condition(None, 0.0, 2.0).holds


def _power_integral_diverges(beta, alpha, delta):
    w = sympy.Symbol("w", positive=True)
    p = sympy.nsimplify(beta - 1 - alpha - delta)
    return sympy.integrate(w**p, (w, 0, sympy.Rational(1, 2))) == sympy.oo


@pytest.mark.parametrize("beta,verdict", [(3.0, Verdict.HOLDS), (2.0, Verdict.FAILS)])
def test_levy_condition_boundary_density(beta, verdict):
    rep = check_levy_moment_condition(BoundaryPowerJump(beta, -0.5), 1.0, 2.0, delta=0.5, n_assets=1)
    assert rep.verdict is verdict
    assert _power_integral_diverges(beta, 2.0, 0.5) == (verdict is Verdict.FAILS)


def test_levy_condition_value_matches_quadrature():
    law = BoundaryPowerJump(3.0, -0.5)
    rep = check_levy_moment_condition(law, 2.0, 2.0, delta=0.5, a=0.6)
    dens = lambda u: 3.0 * (1 + u) ** 2 / 0.5**3
    oracle, _ = integrate.quad(lambda u: (1 + u) ** -2.5 * dens(u), -1.0, -0.6)
    assert rep.value == pytest.approx(2.0 * oracle, rel=1e-8)


def test_levy_condition_default_knobs():
    rep = check_levy_moment_condition(UniformJump(-0.5, 0.5), 1.0, 2.0)
    assert rep.params == {"alpha": 2.0, "delta": pytest.approx(0.2), "a": 0.5, "n": 1}


def test_levy_condition_unknown_law_is_undecidable():
    class Odd:
        support = (-1.0, 0.0)

    rep = check_levy_moment_condition(Odd(), 1.0, 2.0)
    assert rep.verdict is Verdict.UNDECIDABLE


def test_no_short_selling():
    assert check_no_short_selling(ConstantStrategy((0.4, 0.6))).holds
    assert check_no_short_selling(ConstantStrategy((1.2,))).verdict is Verdict.FAILS
    assert check_no_short_selling(ConstantStrategy((-0.1,))).verdict is Verdict.FAILS


def test_exponential_moments_constant_gbm_hold():
    reps = check_exponential_moment_conditions(ConstantStrategy((0.5,)), GBM(0.1, 0.2), 2.0)
    assert [r.condition for r in reps] == ["variance-moment", "novikov", "drift-moment"]
    assert all(r.holds for r in reps)
    assert reps[0].params["gamma"] == 3.0


def test_exponential_moments_cir_all_t():
    # u = (2 gamma^2 + gamma) pi^2 = 0.4 <= kappa^2 / (2 delta^2) = 0.5
    asset = DiffusionSV(0.06, CirParams(1.0, 0.04, 1.0, 0.04))
    pi = math.sqrt(0.4 / 10.0)
    reps = check_exponential_moment_conditions(ConstantStrategy((pi,)), asset, 1.0, gamma=2.0)
    assert reps[0].holds and math.isinf(reps[0].value)


def test_exponential_moments_cir_fails_before_one():
    asset = DiffusionSV(0.06, CirParams(0.5, 0.04, 2.0, 0.04))
    reps = check_exponential_moment_conditions(ConstantStrategy((math.sqrt(0.5),)), asset, 1.0, gamma=2.0)
    rep = reps[0]
    assert rep.verdict is Verdict.FAILS
    assert rep.params["u"] == pytest.approx(5.0)
    assert rep.value == pytest.approx(riccati_blowup(5.0, 0.5, 2.0), rel=1e-6)
    assert rep.value == pytest.approx(0.523, abs=1e-3)


def test_exponential_moments_unbounded_strategy_undecidable():
    asset = DiffusionSV(0.06, CirParams(1.0, 0.04, 1.0, 0.04))
    reps = check_exponential_moment_conditions(AsymptoticallyOptimal(2.0), asset, 2.0)
    assert all(r.verdict is Verdict.UNDECIDABLE for r in reps)


def test_exponential_moments_reject_small_gamma():
    with pytest.raises(ValueError):
        check_exponential_moment_conditions(ConstantStrategy((0.5,)), GBM(0.1, 0.2), 2.0, gamma=1.5)
