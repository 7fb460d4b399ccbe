import numpy as np
import pytest

from core import payoffs
from core.engine1d import black_scholes_diffusion, curve_forward, flat_surface, local_vol_diffusion
from core.engine_nd import (build_geometry_nd, cholesky3, correlation_function, price_backward_2d,
                            price_backward_3d, stencil_2d, stencil_3d)
from core.errors import DegenerateCorrelationError, ParameterError
from core.interp import InterpMethod
from core.market import LocalVolSurface, black_price
from features import presets
from features.tables import run_table


@pytest.mark.parametrize("rho", [-0.7, 0.0, 0.5, 0.95])
def test_two_asset_stencil_moments(rho):
    z = stencil_2d(rho)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(z.T @ z / len(z), [[1.0, rho], [rho, 1.0]], atol=1e-12)


def test_three_asset_stencil_moments():
    corr = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, -0.3], [0.2, -0.3, 1.0]])
    z = stencil_3d(cholesky3(corr[0, 1], corr[0, 2], corr[1, 2]))
    assert z.shape == (9, 3)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(z.T @ z / len(z), corr, atol=1e-12)


def test_stencils_match_random_diffusion_moments():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        mu = rng.uniform(-0.2, 0.2, 3)
        sigma = rng.uniform(0.05, 0.8, 3)
        dt = rng.uniform(1e-3, 0.25)
        rho = rng.uniform(-0.9, 0.9)
        a = rng.normal(size=(3, 3))
        cov = a @ a.T + 0.5 * np.eye(3)
        corr = cov / np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
        cases = [(stencil_2d(rho), np.array([[1.0, rho], [rho, 1.0]])),
                 (stencil_3d(cholesky3(corr[0, 1], corr[0, 2], corr[1, 2])), corr)]
        for z, target in cases:
            dims = z.shape[1]
            shifts = mu[:dims] * dt + z * sigma[:dims] * np.sqrt(dt)
            np.testing.assert_allclose(shifts.mean(axis=0), mu[:dims] * dt, atol=1e-14)
            centred = shifts - mu[:dims] * dt
            expected = target * np.outer(sigma[:dims], sigma[:dims]) * dt
            np.testing.assert_allclose(centred.T @ centred / len(z), expected, atol=1e-13)


def test_cholesky3_factors_the_matrix():
    L = cholesky3(0.5, 0.5, 0.5).matrix()
    np.testing.assert_allclose(L @ L.T, [[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]], atol=1e-14)


def test_cholesky3_degenerate_and_indefinite():
    with pytest.raises(DegenerateCorrelationError):
        cholesky3(1.0, 0.2, 0.2)
    with pytest.raises(ParameterError):
        cholesky3(0.9, 0.9, -0.9)


def test_correlation_inputs():
    assert correlation_function(0.3, 2)(1.0)[0, 1] == pytest.approx(0.3)
    assert correlation_function([0.1, 0.2, 0.3], 3)(0.0)[1, 2] == pytest.approx(0.3)
    varying = correlation_function(lambda t: 0.2 + 0.1 * t, 2)
    assert varying(2.0)[1, 0] == pytest.approx(0.4)
    with pytest.raises(ParameterError):
        correlation_function(1.5, 2)
    with pytest.raises(ParameterError):
        correlation_function([0.9, 0.9, -0.9], 3)
    with pytest.raises(ParameterError):
        correlation_function(np.array([[1.0, 0.2], [0.3, 1.0]]), 2)
    with pytest.raises(ParameterError):
        correlation_function([0.1, 0.2], 3)


def test_geometry_validates_inputs(zero_curve):
    surfaces = [flat_surface(100.0, 0.2)] * 2
    with pytest.raises(ParameterError, match=r"grid_finess\[1\] must lie in \(0, 1\]"):
        build_geometry_nd(surfaces, zero_curve, 1.0, 10, [0.5, 1.7], 0.5)
    with pytest.raises(ParameterError):
        build_geometry_nd(surfaces[:1], zero_curve, 1.0, 10, 0.5, 0.5)


def test_geometry_stats(zero_curve):
    geometry = build_geometry_nd([flat_surface(100.0, 0.2)] * 3, zero_curve, 1.0, 6, 0.5, [0.5, 0.5, 0.5])
    stats = geometry.stats()
    assert stats["steps"] == 6 and len(stats["dx"]) == 3
    assert stats["total_nodes"] == int(np.prod(stats["terminal_nodes"]))


@pytest.mark.parametrize("method", [InterpMethod.BICUBIC, InterpMethod.KEYS])
def test_two_asset_constant_payoff(method, default_curve):
    geometry = build_geometry_nd([flat_surface(100.0, 0.25), flat_surface(100.0, 0.2)], default_curve,
                                 1.0, 6, 0.5, 0.5)
    diffusions = [black_scholes_diffusion(0.25), black_scholes_diffusion(0.2)]
    value = price_backward_2d(geometry, diffusions, payoffs.multi_constant(1.0), default_curve, method).value
    assert value == pytest.approx(default_curve.discount(1.0), rel=1e-12)


def test_three_asset_constant_payoff(default_curve):
    geometry = build_geometry_nd([flat_surface(100.0, 0.2)] * 3, default_curve, 1.0, 4, 0.5, [0.5, 0.5, 0.5])
    diffusions = [black_scholes_diffusion(0.2)] * 3
    value = price_backward_3d(geometry, diffusions, payoffs.multi_constant(1.0), default_curve).value
    assert value == pytest.approx(default_curve.discount(1.0), rel=1e-12)


@pytest.mark.parametrize("method", [InterpMethod.BICUBIC, InterpMethod.KEYS])
def test_single_asset_claim_on_a_two_asset_grid_matches_black(method, zero_curve):
    geometry = build_geometry_nd([flat_surface(100.0, 0.25), flat_surface(100.0, 0.2)], zero_curve,
                                 1.0, 12, 0.5, 0.5)
    diffusions = [black_scholes_diffusion(0.25), black_scholes_diffusion(0.2)]
    payoff = payoffs.basket_call(100.0, [1.0, 0.0])
    value = price_backward_2d(geometry, diffusions, payoff, zero_curve, method).value
    assert value == pytest.approx(black_price(100.0, 100.0, 1.0, 0.25), abs=0.1)


def test_two_asset_pricer_rejects_other_methods(zero_curve):
    geometry = build_geometry_nd([flat_surface(100.0, 0.2)] * 2, zero_curve, 1.0, 4, 0.5, 0.5)
    with pytest.raises(ParameterError):
        price_backward_2d(geometry, [black_scholes_diffusion(0.2)] * 2, payoffs.multi_constant(),
                          zero_curve, InterpMethod.STINEMAN)


def test_best_of_exceeds_each_single_call(zero_curve):
    geometry = build_geometry_nd([flat_surface(100.0, 0.2)] * 3, zero_curve, 1.0, 6, 0.5, [0.5, 0.5, 0.5])
    diffusions = [black_scholes_diffusion(0.2)] * 3
    best = price_backward_3d(geometry, diffusions, payoffs.best_of_call(100.0), zero_curve).value
    single = price_backward_3d(geometry, diffusions, payoffs.basket_call(100.0, [1.0, 0.0, 0.0]),
                               zero_curve).value
    assert best > single > 0.0


@pytest.mark.slow
def test_two_asset_table():
    frame = run_table("basket2d")
    np.testing.assert_allclose(frame["basket_grid_full"], [21.69, 7.77, 1.33], atol=0.15)
    np.testing.assert_allclose(frame["best_grid_full"], [29.82, 13.38, 3.43], atol=0.15)
    np.testing.assert_allclose(frame["spread_grid_full"], [2.20, 9.13, 22.61], atol=0.15)


@pytest.mark.slow
def test_three_asset_table():
    frame = run_table("basket3d")
    np.testing.assert_allclose(frame["basket_grid_full"], [21.70, 8.22, 1.95], atol=0.15)
    np.testing.assert_allclose(frame["best_grid_full"], [35.98, 18.75, 7.35], atol=0.15)


def test_keys_and_bicubic_agree_on_a_local_vol_basket(zero_curve):
    lvs = [LocalVolSurface(presets.surface(name), zero_curve) for name in ("asset1", "asset2")]
    geometry = build_geometry_nd([lv.surface for lv in lvs], zero_curve, 1.0, 12, 0.5, 0.5)
    diffusions = [local_vol_diffusion(lv, curve_forward(zero_curve, lv.spot)) for lv in lvs]
    payoff = payoffs.basket_call(100.0, [0.5, 0.5])
    bicubic = price_backward_2d(geometry, diffusions, payoff, zero_curve, InterpMethod.BICUBIC).value
    keys = price_backward_2d(geometry, diffusions, payoff, zero_curve, InterpMethod.KEYS).value
    assert keys == pytest.approx(bicubic, abs=0.02)
