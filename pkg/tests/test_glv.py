import numpy as np
import pytest

from core import payoffs
from core.errors import ParameterError, StabilityError
from core.glv import (adj_factor_row, binormal_start, calibrate_glv, digital_above, expected_rate_above,
                      fp_step_2d, glv_geometry, price_glv)
from core.hybrid import HullWhiteParams, build_hybrid_geometry_surface, hw_phi
from core.market import LocalVolSurface, bs_implied_vol, forward_price, implied_vol
from features import presets
from features.tables import run_table

T = 1.0
STEPS = 20


@pytest.fixture
def default_lv(default_curve):
    return LocalVolSurface(presets.surface("asset1"), default_curve)


@pytest.fixture
def no_rate_vol():
    return HullWhiteParams(0.05, 0.0, -0.3)


@pytest.fixture
def field_without_rate_vol(default_lv, no_rate_vol):
    return calibrate_glv(default_lv, no_rate_vol, T, STEPS, keep_ad=True)


def test_expected_rate_above_counts_the_strike_node_half():
    ad = np.array([[1.0], [2.0], [3.0]])
    out = expected_rate_above(ad, np.array([0.0]), 0.1)
    np.testing.assert_allclose(out, [0.1 * (0.5 + 2.0 + 3.0), 0.1 * (1.0 + 3.0), 0.1 * 1.5])
    np.testing.assert_allclose(digital_above(ad), [5.5, 4.0, 1.5])


def test_suffix_sums_match_the_direct_sum():
    rng = np.random.default_rng(7)
    ad = rng.random((20, 20))
    x2 = np.linspace(-0.05, 0.05, 20)
    direct = [sum((0.5 if j == i else 1.0) * (ad[j] * (x2 + 0.03)).sum() for j in range(i, 20))
              for i in range(20)]
    np.testing.assert_allclose(expected_rate_above(ad, x2, 0.03), direct, rtol=1e-12)


def test_field_shapes(field_without_rate_vol):
    vol_field = field_without_rate_vol
    nodes = vol_field.x1.size
    assert vol_field.sigma.shape == (STEPS, nodes)
    assert vol_field.dupire.shape == (STEPS, nodes)
    assert vol_field.masses.shape == (STEPS,)
    assert len(vol_field.ad_sheets) == STEPS
    assert vol_field.spot == pytest.approx(100.0)


def test_arrow_debreu_mass_tracks_the_discount_factor(field_without_rate_vol, default_curve):
    times = (np.arange(STEPS) + 1) * T / STEPS
    np.testing.assert_allclose(field_without_rate_vol.masses, default_curve.discount(times), rtol=5e-3)
    for sheet in field_without_rate_vol.ad_sheets:
        assert np.all(sheet.values >= 0.0)


def test_without_rate_vol_the_adjustment_vanishes(field_without_rate_vol):
    vol_field = field_without_rate_vol
    assert np.abs(vol_field.sigma - vol_field.dupire).max() < 2e-3


def test_sheet_digital_cancels_deterministic_rates(field_without_rate_vol, default_lv, no_rate_vol,
                                                    default_curve):
    sheet = field_without_rate_vol.ad_sheets[9]
    phi_rate = hw_phi(default_curve, no_rate_vol, sheet.time)
    adj, _, _ = adj_factor_row(sheet.values, default_lv, sheet.x1, sheet.x2, no_rate_vol, sheet.time, phi_rate)
    np.testing.assert_allclose(adj, 0.0, atol=1e-10)

    smile, terms, _ = adj_factor_row(sheet.values, default_lv, sheet.x1, sheet.x2, no_rate_vol, sheet.time,
                                     phi_rate, smile_digital=True)
    atm = int(np.argmin(np.abs(sheet.x1)))
    assert abs(smile[atm] / terms.nume[atm]) < 0.02


def test_first_sheet_carries_the_smile(default_lv, hw_default, no_rate_vol, default_curve):
    geometry = glv_geometry(default_lv, hw_default, T, STEPS)
    x1, x2 = geometry.states(1)
    flat = binormal_start(geometry, default_lv, no_rate_vol)
    joint = binormal_start(geometry, default_lv, hw_default)

    assert np.count_nonzero(flat.sum(axis=0)) == 1
    np.testing.assert_allclose(joint.sum(axis=1), flat.sum(axis=1), atol=1e-14)
    assert joint.sum() == pytest.approx(default_curve.discount(geometry.dt), rel=1e-12)
    forward = forward_price(default_curve, 100.0, geometry.dt)
    assert (flat.sum(axis=1) * 100.0 * np.exp(x1)).sum() / flat.sum() == pytest.approx(forward, rel=1e-3)

    weights = joint / joint.sum()
    m1, m2 = (weights.sum(axis=1) * x1).sum(), (weights.sum(axis=0) * x2).sum()
    covariance = (weights * np.outer(x1 - m1, x2 - m2)).sum()
    assert covariance < 0.0


def test_calibration_with_rate_vol_stays_positive(default_lv, hw_default, default_curve):
    vol_field = calibrate_glv(default_lv, hw_default, T, STEPS, keep_ad=True)
    times = (np.arange(STEPS) + 1) * T / STEPS
    np.testing.assert_allclose(vol_field.masses, default_curve.discount(times), rtol=1e-2)
    for sheet in vol_field.ad_sheets:
        assert np.all(sheet.values >= 0.0)
    assert vol_field.cutoffs.sum() < vol_field.sigma.size


def test_calibrated_grid_reprices_the_market(field_without_rate_vol, default_lv, no_rate_vol, default_curve):
    premium = price_glv(field_without_rate_vol, no_rate_vol, payoffs.call(100.0), default_curve).value
    F = forward_price(default_curve, 100.0, T)
    vol = bs_implied_vol(premium, F, 100.0, T, default_curve.discount(T))
    assert vol == pytest.approx(implied_vol(default_lv.surface, 100.0, T), abs=5e-3)


def test_rate_vol_moves_the_field(default_lv, hw_default):
    vol_field = calibrate_glv(default_lv, hw_default, T, 10)
    assert np.all(np.isfinite(vol_field.sigma))
    assert np.all(vol_field.sigma > 0.0)
    assert not np.allclose(vol_field.sigma[5:], vol_field.dupire[5:])


def test_field_frames(field_without_rate_vol):
    vol_field = field_without_rate_vol
    frame = vol_field.to_frame()
    assert list(frame.columns) == ["step", "time", "node", "strike", "sigma_adj", "sigma_dupire"]
    assert len(frame) == vol_field.sigma.size
    masses = vol_field.mass_frame()
    assert list(masses.columns) == ["step", "time", "ad_mass"]
    assert masses["step"].iloc[0] == 1
    np.testing.assert_allclose(vol_field.sigma_at(3, vol_field.x1), vol_field.sigma[3])


def test_calibration_needs_a_rectangular_grid(default_lv, hw_default):
    geometry = build_hybrid_geometry_surface(default_lv.surface, default_lv.curve, hw_default, T, 6)
    with pytest.raises(ParameterError):
        calibrate_glv(default_lv, hw_default, T, 6, geometry=geometry)
    assert glv_geometry(default_lv, hw_default, T, 6).is_rectangular


def test_adjustment_row_is_read_at_the_equity_strikes(default_lv, hw_default):
    geometry = glv_geometry(default_lv, hw_default, T, STEPS)
    x1, x2 = geometry.states(1)
    ad = np.full((x1.size, x2.size), 1.0 / (x1.size * x2.size))
    adj, terms, strikes = adj_factor_row(ad, default_lv, x1, x2, hw_default, geometry.dt, 0.02 * geometry.dt)
    np.testing.assert_allclose(strikes, 100.0 * np.exp(x1))
    assert adj.shape == x1.shape
    assert np.all(np.isfinite(adj))
    assert np.all(terms.vega >= 0.0)


def test_oversized_vol_makes_the_forward_step_unstable(default_lv, hw_default, default_curve):
    geometry = glv_geometry(default_lv, hw_default, T, STEPS)
    x1, x2 = geometry.states(1)
    ad = np.ones((x1.size, x2.size))
    with pytest.raises(StabilityError) as info:
        fp_step_2d(ad, geometry, np.full(x1.size, 50.0), hw_default, default_curve, 1)
    assert info.value.step == 1
    assert "out of range" in str(info.value)


@pytest.mark.slow
def test_calibration_table_errors_are_small():
    frame = run_table("glv_calib")
    full = frame[[c for c in frame.columns if c.endswith("_full")]].to_numpy()
    assert np.nanmax(np.abs(full)) < 0.5
