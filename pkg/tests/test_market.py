import numpy as np
import pytest

from core.engine1d import flat_surface
from core.errors import DomainError, ImpliedVolError, ParameterError
from core.market import (BSQuote, LocalVolSurface, SSVISurface, YieldCurve, black_price, bs_implied_vol, bs_price,
                         curve_eval, decay_average, dupire_local_vol, forward_price, hw_adjusted_vol, implied_vol)
from features import presets


@pytest.fixture
def curve():
    return YieldCurve(0.02, 0.04, 1.0)


@pytest.fixture
def asset1():
    return presets.surface("asset1")


def test_decay_average_limits():
    assert decay_average(0.0) == pytest.approx(1.0)
    assert decay_average(1e-12) == pytest.approx(1.0)
    assert decay_average(1.0) == pytest.approx(1.0 - np.exp(-1.0))


def test_curve_short_and_long_rates(curve):
    assert curve.zero_rate(0.0) == pytest.approx(0.02)
    assert curve.zero_rate(1000.0) == pytest.approx(0.04, abs=1e-4)
    assert curve.forward_rate(0.0) == pytest.approx(0.02)


@pytest.mark.parametrize("t", [0.25, 1.0, 3.0, 10.0])
def test_curve_integrals_are_consistent(curve, t):
    assert curve.log_discount(t) == pytest.approx(t * curve.zero_rate(t), rel=1e-12)
    h = 1e-5
    slope = (curve.log_discount(t + h) - curve.log_discount(t - h)) / (2.0 * h)
    assert slope == pytest.approx(curve.forward_rate(t), rel=1e-7)
    point = curve_eval(curve, t)
    assert point.discount == pytest.approx(np.exp(-t * point.zero_rate))


def test_step_discounts_chain_to_the_discount_factor(curve):
    times = np.linspace(0.0, 2.0, 9)
    product = np.prod([curve.step_discount(a, b) for a, b in zip(times[:-1], times[1:])])
    assert product == pytest.approx(curve.discount(2.0), rel=1e-12)


def test_negative_time_rejected(curve):
    with pytest.raises(DomainError):
        curve.discount(-0.1)


def test_bad_curvature_rejected():
    with pytest.raises(ParameterError):
        YieldCurve(0.02, 0.04, 0.0)


def test_forward_with_dividend_yield(curve):
    F = forward_price(curve, 100.0, 2.0, dividend_yield=lambda u: 0.01)
    assert F == pytest.approx(100.0 * np.exp(curve.log_discount(2.0) - 0.02), rel=1e-10)
    assert forward_price(YieldCurve.flat(0.0), 100.0, 3.0) == pytest.approx(100.0)


def test_ssvi_atm_vol_is_the_term_structure(asset1):
    assert asset1.atm_vol(1.0) == pytest.approx(0.25)
    assert implied_vol(asset1, 100.0, 1.0) == pytest.approx(0.25, abs=1e-14)
    term = SSVISurface(100.0, 0.30, 0.20, 2.0, 0.0, 0.0, 0.5)
    assert term.atm_vol(1e-9) == pytest.approx(0.30, abs=1e-6)
    assert term.atm_vol(500.0) == pytest.approx(0.20, abs=1e-3)


def test_negative_skew_raises_low_strikes(asset1):
    assert implied_vol(asset1, 80.0, 1.0) > implied_vol(asset1, 100.0, 1.0) > implied_vol(asset1, 120.0, 1.0)


def test_flat_surface_is_flat():
    surface = flat_surface(100.0, 0.3)
    np.testing.assert_allclose(implied_vol(surface, np.array([50.0, 100.0, 180.0]), 2.0), 0.3, atol=1e-14)


@pytest.mark.parametrize("kwargs", [{"b": 1.2}, {"rho_skew": 1.0}, {"v0": 0.0}, {"spot": -1.0}])
def test_invalid_ssvi_rejected(kwargs):
    params = dict(spot=100.0, v0=0.25, v1=0.25, c=5.0, rho_skew=0.8, a=-0.7, b=0.4)
    params.update(kwargs)
    with pytest.raises(ParameterError):
        SSVISurface(**params)


def test_implied_vol_domain(asset1):
    with pytest.raises(DomainError):
        implied_vol(asset1, 0.0, 1.0)
    with pytest.raises(DomainError):
        implied_vol(asset1, 100.0, 0.0)


def test_black_atm_call():
    assert black_price(100.0, 100.0, 1.0, 0.25) == pytest.approx(9.9476, abs=1e-4)
    assert bs_price(BSQuote(100.0, 100.0, 1.0, 0.25)) == pytest.approx(9.9476, abs=1e-4)


def test_black_put_call_parity():
    call = black_price(105.0, 95.0, 2.0, 0.3, df=0.9)
    put = black_price(105.0, 95.0, 2.0, 0.3, df=0.9, is_call=False)
    assert call - put == pytest.approx(0.9 * (105.0 - 95.0), rel=1e-12)


def test_black_zero_vol_is_discounted_intrinsic():
    assert black_price(100.0, 90.0, 1.0, 0.0, df=0.95) == pytest.approx(9.5)
    assert black_price(100.0, 110.0, 1.0, 0.0) == 0.0


@pytest.mark.parametrize("strike,is_call", [(60.0, False), (100.0, True), (100.0, False), (150.0, True)])
def test_implied_vol_round_trip(strike, is_call):
    premium = black_price(102.0, strike, 1.5, 0.27, df=0.97, is_call=is_call)
    assert bs_implied_vol(premium, 102.0, strike, 1.5, 0.97, is_call) == pytest.approx(0.27, abs=1e-10)


def test_implied_vol_outside_bounds():
    with pytest.raises(ImpliedVolError):
        bs_implied_vol(101.0, 100.0, 100.0, 1.0)
    with pytest.raises(ImpliedVolError):
        bs_implied_vol(5.0, 100.0, 90.0, 1.0)


def test_dupire_of_a_flat_surface_is_the_flat_vol(curve):
    lv = LocalVolSurface(flat_surface(100.0, 0.25), curve)
    strikes = np.array([70.0, 90.0, 100.0, 115.0, 140.0])
    for t in (0.25, 1.0, 3.0):
        np.testing.assert_allclose(dupire_local_vol(lv, strikes, t), 0.25, atol=1e-8)


def test_dupire_skew_mirrors_the_smile(asset1):
    lv = LocalVolSurface(asset1, YieldCurve.flat(0.0))
    low, atm, high = dupire_local_vol(lv, np.array([80.0, 100.0, 120.0]), 1.0)
    assert low > atm > high
    assert atm == pytest.approx(0.25, abs=0.03)


def test_dupire_deep_wing_returns_the_cap(asset1):
    lv = LocalVolSurface(asset1, YieldCurve.flat(0.0))
    assert dupire_local_vol(lv, 500.0, 0.01) == pytest.approx(lv.cap(0.01))
    assert lv.cap(0.01) == pytest.approx(1.25)


def test_dupire_is_clipped_to_a_forced_cap(asset1):
    lv = LocalVolSurface(asset1, YieldCurve.flat(0.0), cap_multiple=0.01)
    assert dupire_local_vol(lv, 100.0, 1.0) == pytest.approx(0.0025)


def test_local_vol_bounds_validated(asset1):
    with pytest.raises(ParameterError):
        LocalVolSurface(asset1, YieldCurve.flat(0.0), floor=0.0)


def test_hull_white_adjusted_vol():
    assert hw_adjusted_vol(0.2, 0.02, 0.05, -0.3, 1.0) == pytest.approx(0.19735, abs=1e-4)
    assert hw_adjusted_vol(0.2, 0.0, 0.05, -0.3, 3.0) == pytest.approx(0.2)
    assert hw_adjusted_vol(0.2, 0.02, 0.05, -0.3, 0.0) == pytest.approx(0.2)
