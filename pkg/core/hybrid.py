"""
Equity hybrids on the two-factor ODgrid: Hull-White rates and Heston variance.

Both run the five-point stencil of the two-asset engine, but interpolate with a
monotone cubic along the equity axis and linearly along the second axis. The
backward sweep is shared; a dynamics object supplies the per-step coefficients.
"""

import logging
import time
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from core.engine1d import (BackwardResult, GridGeometry1D, build_axis,
                           check_grid_finess, check_steps, skew_bounds)
from core.engine_nd import SPACING_FACTOR_2D, stencil_2d
from core.errors import NumericError, ParameterError
from core.interp import InterpMethod, Lattice2D, eval_cubic_linear
from core.market import SSVISurface, YieldCurve, decay_average, forward_price, hw_adjusted_vol
from core.payoffs import Payoff

logger = logging.getLogger(__name__)

BOUND_STDEVS = 4.0
MIN_SECOND_INTERVALS = 2
DEGENERATE_HALF_WIDTH = 1e-6
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class HullWhiteParams:
    k: float
    sigma_r: float
    rho_sr: float

    def __post_init__(self):
        if not self.k > 0.0:
            raise ParameterError(f"Hull-White mean reversion must be positive, got {self.k}")
        if self.sigma_r < 0.0:
            raise ParameterError(f"Hull-White rate vol must be non-negative, got {self.sigma_r}")
        if abs(self.rho_sr) > 1.0:
            raise ParameterError(f"|rho_sr| must not exceed 1, got {self.rho_sr}")


@dataclass(frozen=True)
class HestonParams:
    v0: float
    v_bar: float
    sigma_v: float
    k_v: float
    rho_sv: float

    def __post_init__(self):
        if min(self.v0, self.v_bar, self.sigma_v) < 0.0:
            raise ParameterError("Heston variances and vol-of-variance must be non-negative")
        if not self.k_v > 0.0:
            raise ParameterError(f"Heston mean reversion must be positive, got {self.k_v}")
        if abs(self.rho_sv) > 1.0:
            raise ParameterError(f"|rho_sv| must not exceed 1, got {self.rho_sv}")

    @property
    def stationary_stdev(self) -> float:
        return self.sigma_v * np.sqrt(self.v_bar / (2.0 * self.k_v))


# ---------------------------------------------------------------------------
# Hull-White analytics
# ---------------------------------------------------------------------------

def hw_phi(curve: YieldCurve, hw: HullWhiteParams, t: float) -> float:
    """Deterministic shift r(t) = X2(t) + phi(t) fitting the curve"""
    convexity = hw.sigma_r ** 2 / (2.0 * hw.k ** 2) * (-np.expm1(-hw.k * t)) ** 2
    return float(curve.forward_rate(t) + convexity)


def hw_phi_integral(curve: YieldCurve, hw: HullWhiteParams, t0: float, t1: float) -> float:
    """Exact integral of phi over [t0, t1]"""
    k = hw.k
    e0, e1 = np.exp(-k * t0), np.exp(-k * t1)
    square = (t1 - t0) - 2.0 * (e0 - e1) / k + (e0 * e0 - e1 * e1) / (2.0 * k)
    return float(curve.log_discount(t1) - curve.log_discount(t0) + hw.sigma_r ** 2 / (2.0 * k * k) * square)


def hw_rate_stddev(hw: HullWhiteParams, t: float) -> float:
    if t <= 0.0:
        return 0.0
    return float(hw.sigma_r * np.sqrt(t * decay_average(2.0 * hw.k * t)))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass
class HybridGeometry:
    """Equity axis (cubic) by second axis (linear); the two share steps"""
    equity: GridGeometry1D
    second: GridGeometry1D
    second_name: str = "rate"

    @property
    def steps(self) -> int:
        return self.equity.steps

    @property
    def dt(self) -> float:
        return self.equity.dt

    @property
    def maturity(self) -> float:
        return self.equity.maturity

    def time(self, step: int) -> float:
        return self.equity.time(step)

    def states(self, step: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.equity.states(step), self.second.states(step)

    def rectangular(self) -> 'HybridGeometry':
        return replace(self, equity=self.equity.rectangular(), second=self.second.rectangular())

    @property
    def is_rectangular(self) -> bool:
        return self.equity.is_rectangular and self.second.is_rectangular

    def stats(self) -> dict:
        return {
            "steps": int(self.steps),
            "dx": [float(self.equity.dx), float(self.second.dx)],
            "terminal_nodes": [self.equity.node_count(self.steps), self.second.node_count(self.steps)],
        }


def fixed_axis(maturity: float, steps: int, origin: float, dx: float, lo: float, hi: float,
               grid_finess: float = 1.0, min_intervals: int = MIN_SECOND_INTERVALS) -> GridGeometry1D:
    """Same nodes origin + j*dx covering [lo, hi] at every step after the root"""
    first = int(np.ceil((lo - origin) / dx - 1e-9))
    last = int(np.ceil((hi - origin) / dx - 1e-9))
    first, last = min(first, 0), max(last, 0)
    while last - first < min_intervals:
        last += 1
    x_dn = np.full(steps + 1, origin + first * dx)
    nx = np.full(steps + 1, last - first, dtype=int)
    x_dn[0], nx[0] = origin, 0
    return GridGeometry1D(maturity, steps, dx, x_dn, nx, np.ones(steps + 1), grid_finess)


def rate_axis(hw: HullWhiteParams, maturity: float, steps: int, grid_finess: float) -> GridGeometry1D:
    dt = maturity / steps
    dx = hw.sigma_r * np.sqrt(SPACING_FACTOR_2D * (1.0 + abs(hw.rho_sr)) * dt) * grid_finess
    if dx <= 0.0:
        # deterministic rates: a token axis so the linear blend still has two rows
        return fixed_axis(maturity, steps, 0.0, DEGENERATE_HALF_WIDTH, -DEGENERATE_HALF_WIDTH,
                          DEGENERATE_HALF_WIDTH, grid_finess)

    def bounds(t):
        width = BOUND_STDEVS * hw_rate_stddev(hw, t)
        return -width, width
    return build_axis(maturity, steps, dx, bounds, np.ones(steps + 1), grid_finess, MIN_SECOND_INTERVALS)


def equity_axis(spot: float, curve: YieldCurve, maturity: float, steps: int, grid_finess: float,
                spacing_vol: float, band) -> GridGeometry1D:
    """
    X1 = ln(S/spot) with the band centred on ln(F(t)/spot); `band(t)` gives the raw
    half-widths around that centre.
    """
    dt = maturity / steps
    dx = spacing_vol * np.sqrt(SPACING_FACTOR_2D * dt) * grid_finess

    def bounds(t):
        lo, hi = band(t)
        centre = float(curve.log_discount(t))
        return centre + lo, centre + hi
    return build_axis(maturity, steps, dx, bounds, np.full(steps + 1, float(spot)), grid_finess)


def build_hybrid_geometry_hw(curve: YieldCurve, hw: HullWhiteParams, sigma_s: float, spot: float,
                             maturity: float, steps: int,
                             grid_finess: Tuple[float, float] = (0.5, 0.5)) -> HybridGeometry:
    check_steps(maturity, steps)
    g1 = check_grid_finess(grid_finess[0], "grid_finess[0]")
    g2 = check_grid_finess(grid_finess[1], "grid_finess[1]")
    corr_scale = np.sqrt(1.0 + abs(hw.rho_sr))

    def band(t):
        width = BOUND_STDEVS * hw_adjusted_vol(sigma_s, hw.sigma_r, hw.k, hw.rho_sr, t) * np.sqrt(t)
        return -width, width
    equity = equity_axis(spot, curve, maturity, steps, g1, sigma_s * corr_scale, band)
    geometry = HybridGeometry(equity, rate_axis(hw, maturity, steps, g2), "rate")
    logger.debug(f"Hull-White geometry: {geometry.stats()}")
    return geometry


def build_hybrid_geometry_surface(surface: SSVISurface, curve: YieldCurve, hw: HullWhiteParams,
                                  maturity: float, steps: int,
                                  grid_finess: Tuple[float, float] = (0.33, 0.5)) -> HybridGeometry:
    """Equity band from the smile (skew-reflecting 4 sigma), rate axis as for Hull-White"""
    check_steps(maturity, steps)
    g1 = check_grid_finess(grid_finess[0], "grid_finess[0]")
    g2 = check_grid_finess(grid_finess[1], "grid_finess[1]")
    atm = float(np.asarray(surface.atm_vol(maturity)))
    equity = equity_axis(surface.spot, curve, maturity, steps, g1, atm * np.sqrt(1.0 + abs(hw.rho_sr)),
                         lambda t: skew_bounds(surface, surface.spot, t))
    return HybridGeometry(equity, rate_axis(hw, maturity, steps, g2), "rate")


def variance_axis(heston: HestonParams, maturity: float, steps: int, grid_finess: float) -> GridGeometry1D:
    dt = maturity / steps
    dv = heston.sigma_v * np.sqrt(heston.v_bar) * np.sqrt(SPACING_FACTOR_2D * (1.0 + abs(heston.rho_sv)) * dt)
    dv *= grid_finess
    if dv <= 0.0:
        half = DEGENERATE_HALF_WIDTH * max(heston.v0, 1.0)
        return fixed_axis(maturity, steps, heston.v0, half, heston.v0 - half, heston.v0 + half, grid_finess)
    sd = heston.stationary_stdev
    lo = max(VARIANCE_FLOOR, heston.v_bar - BOUND_STDEVS * sd)
    hi = heston.v_bar + BOUND_STDEVS * sd
    return fixed_axis(maturity, steps, heston.v0, dv, min(lo, heston.v0), max(hi, heston.v0), grid_finess)


def build_heston_geometry(heston: HestonParams, spot: float, maturity: float, steps: int,
                          grid_finess: Tuple[float, float] = (1.0, 1.0),
                          curve: Optional[YieldCurve] = None) -> HybridGeometry:
    """Equity axis X1 = ln(S/F(t)) scaled by the stationary vol sqrt(v_bar)"""
    check_steps(maturity, steps)
    g1 = check_grid_finess(grid_finess[0], "grid_finess[0]")
    g2 = check_grid_finess(grid_finess[1], "grid_finess[1]")
    curve = curve or YieldCurve.flat(0.0)
    dt = maturity / steps
    vol = np.sqrt(heston.v_bar)
    dx = vol * np.sqrt(SPACING_FACTOR_2D * (1.0 + abs(heston.rho_sv)) * dt) * g1
    forwards = np.asarray(forward_price(curve, spot, np.arange(steps + 1) * dt))

    def bounds(t):
        width = BOUND_STDEVS * vol * np.sqrt(t)
        return -width, width
    equity = build_axis(maturity, steps, dx, bounds, forwards, g1)
    return HybridGeometry(equity, variance_axis(heston, maturity, steps, g2), "variance")


# ---------------------------------------------------------------------------
# Dynamics and the shared backward sweep
# ---------------------------------------------------------------------------

class StepCoefficients(NamedTuple):
    drift1: np.ndarray
    vol1: np.ndarray
    drift2: np.ndarray
    vol2: np.ndarray
    rho: float
    discount: np.ndarray


class HullWhiteDynamics:
    """
    dX1 = (r - sigma^2/2) dt + sigma dWs, dX2 = -k X2 dt + sigma_r dWr, r = X2 + phi.

    `equity_vol(step, x1)` returns the equity vol per equity node; constant sigma_s
    for the plain hybrid, the adjusted local vol field for the calibrated one.
    """

    def __init__(self, curve: YieldCurve, hw: HullWhiteParams, equity_vol):
        self.curve = curve
        self.hw = hw
        self.equity_vol = equity_vol

    @classmethod
    def constant_vol(cls, curve: YieldCurve, hw: HullWhiteParams, sigma_s: float) -> 'HullWhiteDynamics':
        return cls(curve, hw, lambda step, x1: np.full(x1.shape, float(sigma_s)))

    def coefficients(self, step: int, t: float, dt: float, x1: np.ndarray, x2: np.ndarray) -> StepCoefficients:
        rate_dt = x2 * dt + hw_phi_integral(self.curve, self.hw, t, t + dt)
        sigma = np.asarray(self.equity_vol(step, x1), dtype=float).reshape(x1.shape)
        return StepCoefficients(
            drift1=rate_dt / dt - 0.5 * sigma * sigma,
            vol1=sigma,
            drift2=-self.hw.k * x2,
            vol2=np.full(x2.shape, self.hw.sigma_r),
            rho=self.hw.rho_sr,
            discount=np.exp(-rate_dt),
        )


class HestonDynamics:
    """dX1 = -v/2 dt + sqrt(v) dWs, dv = k(v_bar - v) dt + sigma_v sqrt(v) dWv"""

    def __init__(self, heston: HestonParams, curve: Optional[YieldCurve] = None):
        self.heston = heston
        self.curve = curve or YieldCurve.flat(0.0)

    def coefficients(self, step: int, t: float, dt: float, x1: np.ndarray, x2: np.ndarray) -> StepCoefficients:
        h = self.heston
        v = np.maximum(x2, VARIANCE_FLOOR)
        root = np.sqrt(v)
        return StepCoefficients(
            drift1=-0.5 * v,
            vol1=root,
            drift2=h.k_v * (h.v_bar - v),
            vol2=h.sigma_v * root,
            rho=h.rho_sv,
            discount=np.asarray(self.curve.step_discount(t, t + dt)),
        )


def price_backward_hybrid(geometry: HybridGeometry, dynamics, payoff: Payoff,
                          method: InterpMethod = InterpMethod.STINEMAN) -> BackwardResult:
    method = InterpMethod.parse(method)
    if not method.is_1d:
        raise ParameterError(f"hybrid grids interpolate the equity axis with a 1D method, not {method.value}")
    start = time.perf_counter()
    N, dt = geometry.steps, geometry.dt
    sqrt_dt = np.sqrt(dt)

    x1, x2 = geometry.states(N)
    spots = geometry.equity.spots(N)[:, None]
    values = np.broadcast_to(payoff.values(x1[:, None], spots), (x1.size, x2.size)).copy()

    for n in range(N - 1, -1, -1):
        lattice = Lattice2D(x1, x2, values).with_row_slopes(method)
        t = geometry.time(n)
        x1, x2 = geometry.states(n)
        col, row = x1[:, None], x2[None, :]
        c = dynamics.coefficients(n, t, dt, col, row)
        if abs(c.rho) >= 1.0:
            logger.warning(f"|rho|=1 at t={t:.4f}: one pair of stencil shifts collapses to zero")
        centre1 = col + c.drift1 * dt
        centre2 = row + c.drift2 * dt
        total = np.zeros((x1.size, x2.size))
        for z1, z2 in stencil_2d(c.rho):
            total += eval_cubic_linear(lattice, centre1 + z1 * c.vol1 * sqrt_dt, centre2 + z2 * c.vol2 * sqrt_dt)
        values = c.discount * total / 5.0
        bad = ~np.isfinite(values)
        if bad.any():
            node = tuple(int(i) for i in np.unravel_index(np.argmax(bad), values.shape))
            raise NumericError("non-finite value in hybrid backward step", step=n, node=node)
        if payoff.exercise is not None:
            values = payoff.apply_exercise(values, col, geometry.equity.spots(n)[:, None], t)

    elapsed = time.perf_counter() - start
    logger.info(f"hybrid backward ({geometry.second_name}): {N} steps, "
                f"{geometry.stats()['terminal_nodes']} terminal nodes, {elapsed:.3f}s")
    return BackwardResult(float(values[0, 0]), [], elapsed)


def price_hybrid_hw(geometry: HybridGeometry, curve: YieldCurve, hw: HullWhiteParams, sigma_s: float,
                    payoff: Payoff, method: InterpMethod = InterpMethod.STINEMAN) -> BackwardResult:
    return price_backward_hybrid(geometry, HullWhiteDynamics.constant_vol(curve, hw, sigma_s), payoff, method)


def price_heston(geometry: HybridGeometry, heston: HestonParams, payoff: Payoff,
                 curve: Optional[YieldCurve] = None,
                 method: InterpMethod = InterpMethod.STINEMAN) -> BackwardResult:
    return price_backward_hybrid(geometry, HestonDynamics(heston, curve), payoff, method)
