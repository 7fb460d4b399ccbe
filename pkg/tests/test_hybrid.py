import numpy as np
import pytest

from core import payoffs
from core.errors import ParameterError
from core.hybrid import (HestonParams, HullWhiteParams, build_heston_geometry, build_hybrid_geometry_hw,
                         hw_phi, hw_phi_integral, hw_rate_stddev, price_heston, price_hybrid_hw)
from core.interp import InterpMethod
from core.market import black_price, bs_implied_vol, forward_price, hw_adjusted_vol
from features.tables import run_table


def test_phi_integral_matches_quadrature(default_curve, hw_default):
    from scipy import integrate
    exact = hw_phi_integral(default_curve, hw_default, 0.3, 1.7)
    numeric = integrate.quad(lambda u: hw_phi(default_curve, hw_default, u), 0.3, 1.7)[0]
    assert exact == pytest.approx(numeric, rel=1e-10)


def test_phi_is_the_forward_curve_without_rate_vol(default_curve):
    hw = HullWhiteParams(0.05, 0.0, -0.3)
    assert hw_phi(default_curve, hw, 2.0) == pytest.approx(default_curve.forward_rate(2.0))
    assert hw_rate_stddev(hw, 2.0) == 0.0


def test_rate_stddev_is_the_ou_stddev(hw_default):
    k, s = hw_default.k, hw_default.sigma_r
    assert hw_rate_stddev(hw_default, 3.0) == pytest.approx(s * np.sqrt((1.0 - np.exp(-2.0 * k * 3.0)) / (2.0 * k)))


@pytest.mark.parametrize("kwargs", [{"k": 0.0}, {"sigma_r": -0.01}, {"rho_sr": 1.2}])
def test_invalid_hull_white_rejected(kwargs):
    params = dict(k=0.05, sigma_r=0.02, rho_sr=-0.3)
    params.update(kwargs)
    with pytest.raises(ParameterError):
        HullWhiteParams(**params)


def test_invalid_heston_rejected():
    with pytest.raises(ParameterError):
        HestonParams(0.04, 0.04, 0.3, 0.0, -0.5)
    with pytest.raises(ParameterError):
        HestonParams(-0.01, 0.04, 0.3, 1.0, -0.5)


@pytest.mark.parametrize("T", [0.5, 1.0, 3.0])
def test_hybrid_constant_payoff_is_the_zero_coupon_bond(default_curve, hw_default, T):
    geometry = build_hybrid_geometry_hw(default_curve, hw_default, 0.2, 100.0, T, int(40 * T), (0.5, 0.5))
    value = price_hybrid_hw(geometry, default_curve, hw_default, 0.2, payoffs.constant(1.0)).value
    assert value == pytest.approx(default_curve.discount(T), rel=2e-4)


def test_hybrid_call_matches_the_adjusted_vol(default_curve, hw_default):
    T = 1.0
    geometry = build_hybrid_geometry_hw(default_curve, hw_default, 0.2, 100.0, T, 50, (0.5, 0.5))
    premium = price_hybrid_hw(geometry, default_curve, hw_default, 0.2, payoffs.call(110.0)).value
    vol = bs_implied_vol(premium, forward_price(default_curve, 100.0, T), 110.0, T, default_curve.discount(T))
    assert vol == pytest.approx(hw_adjusted_vol(0.2, 0.02, 0.05, -0.3, T), abs=3e-3)


def test_hybrid_without_rate_vol_is_black(default_curve):
    hw = HullWhiteParams(0.05, 0.0, 0.0)
    geometry = build_hybrid_geometry_hw(default_curve, hw, 0.2, 100.0, 1.0, 40, (0.5, 0.5))
    assert geometry.stats()["terminal_nodes"][1] >= 3
    value = price_hybrid_hw(geometry, default_curve, hw, 0.2, payoffs.call(100.0)).value
    expected = black_price(forward_price(default_curve, 100.0, 1.0), 100.0, 1.0, 0.2, default_curve.discount(1.0))
    assert value == pytest.approx(expected, abs=0.05)


def test_hybrid_rejects_two_dimensional_methods(default_curve, hw_default):
    geometry = build_hybrid_geometry_hw(default_curve, hw_default, 0.2, 100.0, 1.0, 4)
    with pytest.raises(ParameterError):
        price_hybrid_hw(geometry, default_curve, hw_default, 0.2, payoffs.call(100.0), InterpMethod.BICUBIC)


def test_heston_without_vol_of_variance_is_black():
    heston = HestonParams(0.04, 0.04, 0.0, 1.0, 0.0)
    geometry = build_heston_geometry(heston, 100.0, 1.0, 50, (1.0, 1.0))
    value = price_heston(geometry, heston, payoffs.call(100.0)).value
    assert value == pytest.approx(black_price(100.0, 100.0, 1.0, 0.2), abs=0.03)


def test_heston_constant_payoff_discounts(default_curve):
    heston = HestonParams(0.029, 0.029, 0.35, 3.0, -0.5)
    geometry = build_heston_geometry(heston, 100.0, 1.0, 10, (1.0, 1.0), default_curve)
    value = price_heston(geometry, heston, payoffs.constant(1.0), default_curve).value
    assert value == pytest.approx(default_curve.discount(1.0), rel=1e-12)


def test_heston_variance_axis_holds_the_start_variance():
    heston = HestonParams(0.029, 0.029, 0.35, 3.0, -0.5)
    geometry = build_heston_geometry(heston, 100.0, 1.0, 10)
    v = geometry.second.states(10)
    assert np.isclose(v, 0.029).any()
    assert v.min() > 0.0


def test_heston_skew_lowers_the_upside():
    flat = HestonParams(0.029, 0.029, 0.0, 3.0, 0.0)
    skewed = HestonParams(0.029, 0.029, 0.35, 3.0, -0.5)
    price = {}
    for name, heston in (("flat", flat), ("skewed", skewed)):
        geometry = build_heston_geometry(heston, 100.0, 1.0, 30, (1.0, 1.0))
        price[name] = price_heston(geometry, heston, payoffs.call(115.0)).value
    assert price["skewed"] < price["flat"]


@pytest.mark.slow
def test_heston_table():
    frame = run_table("heston")
    np.testing.assert_allclose(frame["call_grid_full"], [12.85, 6.60, 2.77], atol=0.1)


@pytest.mark.slow
def test_adjusted_vol_table_is_close_to_closed_form():
    frame = run_table("hw_adj")
    full = frame[[c for c in frame.columns if c.endswith("_full")]].to_numpy()
    assert np.nanmax(np.abs(full)) < 0.25
