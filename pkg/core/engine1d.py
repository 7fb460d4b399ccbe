"""
One-factor ODgrid.

The state is X = ln(S(t)/F(t)). Each step sends every node to three equiprobable
targets X + mu*dt and X + mu*dt +/- sigma*sqrt(3/2*dt), reads their values off the
next sheet by monotone cubic interpolation and discounts. The same grid run forward
gives Arrow-Debreu prices.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from core.errors import NumericError, ParameterError, StabilityError
from core.interp import InterpMethod, Knots1D, eval_1d, slopes_1d
from core.market import (LocalVolSurface, SSVISurface, YieldCurve, dupire_local_vol,
                         forward_price, implied_vol)
from core.payoffs import Payoff

logger = logging.getLogger(__name__)

BOUND_STDEVS = 4.0
MIN_INTERVALS = 6
SPACING_FACTOR_1D = 1.5
AD_NEGATIVE_TOL = 1e-12


def check_grid_finess(grid_finess: float, name: str = "grid_finess") -> float:
    grid_finess = float(grid_finess)
    if not 0.0 < grid_finess <= 1.0:
        raise ParameterError(f"{name} must lie in (0, 1], got {grid_finess}")
    return grid_finess


def check_steps(maturity: float, steps: int) -> None:
    if not maturity > 0.0:
        raise ParameterError(f"maturity must be positive, got {maturity}")
    if int(steps) != steps or steps < 1:
        raise ParameterError(f"step count must be a positive integer, got {steps}")


def stencil_1d() -> np.ndarray:
    """Unit displacements of the equiprobable three-point stencil, scaled by sigma*sqrt(dt)"""
    return np.array([1.0, 0.0, -1.0]) * np.sqrt(SPACING_FACTOR_1D)


@dataclass
class GridGeometry1D:
    maturity: float
    steps: int
    dx: float
    x_dn: np.ndarray
    nx: np.ndarray
    forwards: np.ndarray
    grid_finess: float = 1.0

    @property
    def dt(self) -> float:
        return self.maturity / self.steps

    def time(self, step: int) -> float:
        return step * self.dt

    def x_up(self, step: int) -> float:
        return float(self.x_dn[step] + self.nx[step] * self.dx)

    def node_count(self, step: int) -> int:
        return int(self.nx[step]) + 1

    def states(self, step: int) -> np.ndarray:
        return self.x_dn[step] + np.arange(self.node_count(step)) * self.dx

    def spots(self, step: int) -> np.ndarray:
        return self.forwards[step] * np.exp(self.states(step))

    @property
    def is_rectangular(self) -> bool:
        return bool(np.all(self.x_dn[1:] == self.x_dn[-1]) and np.all(self.nx[1:] == self.nx[-1]))

    def rectangular(self) -> 'GridGeometry1D':
        """Same spacing, maturity bounds at every step after the root"""
        x_dn = np.full_like(self.x_dn, self.x_dn[-1])
        nx = np.full_like(self.nx, self.nx[-1])
        x_dn[0], nx[0] = 0.0, 0
        return replace(self, x_dn=x_dn, nx=nx)

    def stats(self) -> dict:
        return {
            "steps": int(self.steps),
            "dx": float(self.dx),
            "max_nodes": int(self.nx.max()) + 1,
            "total_nodes": int(np.sum(self.nx + 1)),
        }


def align_bounds(x_dn: float, x_up: float, dx: float, min_intervals: int = MIN_INTERVALS) -> Tuple[float, int]:
    """
    Snap raw bounds outward onto the dx lattice (0 is always a node) and widen
    symmetrically until at least min_intervals intervals are covered.
    """
    lo = int(np.floor(x_dn / dx + 1e-9))
    hi = int(np.ceil(x_up / dx - 1e-9))
    lo, hi = min(lo, 0), max(hi, 0)
    while hi - lo < min_intervals:
        if -lo <= hi:
            lo -= 1
        else:
            hi += 1
    return lo * dx, hi - lo


def skew_bounds(surface: SSVISurface, forward0: float, t: float,
                stdevs: float = BOUND_STDEVS) -> Tuple[float, float]:
    """+/- stdevs standard deviations read at the strikes the ATM band reaches"""
    if t <= 0.0:
        return 0.0, 0.0
    sqrt_t = np.sqrt(t)
    atm = implied_vol(surface, forward0, t)
    k_dn = forward0 * np.exp(-stdevs * atm * sqrt_t)
    k_up = forward0 * np.exp(stdevs * atm * sqrt_t)
    return (-stdevs * implied_vol(surface, k_dn, t) * sqrt_t,
            stdevs * implied_vol(surface, k_up, t) * sqrt_t)


def build_axis(maturity: float, steps: int, dx: float,
               bounds: Callable[[float], Tuple[float, float]],
               forwards: np.ndarray, grid_finess: float = 1.0,
               min_intervals: int = MIN_INTERVALS) -> GridGeometry1D:
    """Per-step lattice from raw bounds; the band never shrinks as t grows"""
    dt = maturity / steps
    x_dn = np.zeros(steps + 1)
    nx = np.zeros(steps + 1, dtype=int)
    lo_raw, hi_raw = 0.0, 0.0
    for n in range(1, steps + 1):
        lo, hi = bounds(n * dt)
        lo_raw, hi_raw = min(lo_raw, lo), max(hi_raw, hi)
        x_dn[n], nx[n] = align_bounds(lo_raw, hi_raw, dx, min_intervals)
    return GridGeometry1D(maturity, steps, dx, x_dn, nx, np.asarray(forwards, dtype=float), grid_finess)


def build_geometry_1d(surface: SSVISurface, curve: YieldCurve, maturity: float, steps: int,
                      grid_finess: float = 1.0, spacing_factor: float = SPACING_FACTOR_1D) -> GridGeometry1D:
    check_steps(maturity, steps)
    grid_finess = check_grid_finess(grid_finess)
    dt = maturity / steps
    spot = surface.spot
    vol_t = implied_vol(surface, spot, maturity)
    dx = vol_t * np.sqrt(spacing_factor * dt) * grid_finess
    forwards = np.asarray(forward_price(curve, spot, np.arange(steps + 1) * dt))
    geometry = build_axis(maturity, steps, dx, lambda t: skew_bounds(surface, spot, t), forwards, grid_finess)
    logger.debug(f"1D geometry: dx={dx:.6f}, nodes at maturity={geometry.node_count(steps)}")
    return geometry


def flat_surface(spot: float, vol: float) -> SSVISurface:
    """Constant implied vol, the Black-Scholes special case of the SSVI form"""
    return SSVISurface(spot=spot, v0=vol, v1=vol, c=1.0, rho_skew=0.0, a=0.0, b=0.5)


# ---------------------------------------------------------------------------
# Diffusions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diffusion1D:
    """dX = mu(x, t) dt + sigma(x, t) dW; drift None means the martingale drift -sigma^2/2"""
    vol: Callable[[np.ndarray, float], np.ndarray]
    drift: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def coefficients(self, x: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        sigma = np.broadcast_to(np.asarray(self.vol(x, t), dtype=float), np.shape(x))
        mu = -0.5 * sigma * sigma if self.drift is None else np.asarray(self.drift(x, t), dtype=float)
        return mu, sigma


def black_scholes_diffusion(sigma: float) -> Diffusion1D:
    return Diffusion1D(vol=lambda x, t: np.full(np.shape(x), float(sigma)))


def constant_diffusion(mu: float, sigma: float) -> Diffusion1D:
    return Diffusion1D(vol=lambda x, t: np.full(np.shape(x), float(sigma)),
                       drift=lambda x, t: np.full(np.shape(x), float(mu)))


def local_vol_diffusion(lv: LocalVolSurface, forward: Callable[[float], float]) -> Diffusion1D:
    """Dupire vol at strike F(t) * exp(x)"""
    return Diffusion1D(vol=lambda x, t: dupire_local_vol(lv, forward(t) * np.exp(x), t))


def curve_forward(curve: YieldCurve, spot: float) -> Callable[[float], float]:
    return lambda t: forward_price(curve, spot, t)


# ---------------------------------------------------------------------------
# Sheets
# ---------------------------------------------------------------------------

@dataclass
class ValueSheet1D:
    step: int
    time: float
    states: np.ndarray
    values: np.ndarray
    slopes: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class ADSheet1D:
    step: int
    time: float
    states: np.ndarray
    values: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.values.sum())


@dataclass
class BackwardResult:
    value: float
    sheets: List[ValueSheet1D] = field(default_factory=list)
    elapsed: float = 0.0


def _check_finite(values: np.ndarray, step: int) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        raise NumericError("non-finite value in backward step", step=step, node=int(np.argmax(bad)))


def price_backward_1d(geometry: GridGeometry1D, diffusion: Diffusion1D, payoff: Payoff,
                      curve: YieldCurve, method: InterpMethod = InterpMethod.STINEMAN,
                      keep_sheets: bool = False) -> BackwardResult:
    method = InterpMethod.parse(method)
    start = time.perf_counter()
    N, dt = geometry.steps, geometry.dt
    shift = np.sqrt(SPACING_FACTOR_1D * dt)

    x_next = geometry.states(N)
    values = payoff.values(x_next, geometry.spots(N))
    _check_finite(values, N)
    sheets: List[ValueSheet1D] = []

    for n in range(N - 1, -1, -1):
        slopes = slopes_1d(x_next, values, method)
        if keep_sheets:
            sheets.append(ValueSheet1D(n + 1, geometry.time(n + 1), x_next, values, slopes))
        knots = Knots1D(x_next, values, slopes, geometry.dx)

        x = geometry.states(n)
        t = geometry.time(n)
        mu, sigma = diffusion.coefficients(x, t)
        centre = x + mu * dt
        spread = sigma * shift
        total = eval_1d(knots, centre + spread) + eval_1d(knots, centre) + eval_1d(knots, centre - spread)
        values = np.atleast_1d(curve.step_discount(t, t + dt) * total / 3.0)
        _check_finite(values, n)
        values = payoff.apply_exercise(values, x, geometry.spots(n), t)
        x_next = x

    if keep_sheets:
        sheets.append(ValueSheet1D(0, 0.0, x_next, values))
        sheets.reverse()
    elapsed = time.perf_counter() - start
    logger.info(f"1D backward: {N} steps, {geometry.node_count(N)} terminal nodes, {elapsed:.3f}s")
    return BackwardResult(float(values[0]), sheets, elapsed)


# ---------------------------------------------------------------------------
# Forward Arrow-Debreu
# ---------------------------------------------------------------------------

def first_step_ad(states: np.ndarray, mean: float, stdev: float, discount: float) -> np.ndarray:
    """Normal mass of each node's cell, edge cells running to infinity"""
    edges = np.concatenate([[-np.inf], 0.5 * (states[1:] + states[:-1]), [np.inf]])
    mass = np.diff(norm.cdf((edges - mean) / stdev))
    return discount * mass


def interpolate_ad(states: np.ndarray, values: np.ndarray, query: np.ndarray, spacing: float,
                   method: InterpMethod = InterpMethod.STEFFEN) -> np.ndarray:
    """AD sheet read at off-grid states; zero outside the grid"""
    knots = Knots1D(states, values, slopes_1d(states, values, method), spacing)
    inside = (query >= states[0]) & (query <= states[-1])
    return np.where(inside, eval_1d(knots, np.clip(query, states[0], states[-1])), 0.0)


def clamp_ad(values: np.ndarray, step: int) -> np.ndarray:
    worst = int(np.argmin(values))
    if values[worst] < -AD_NEGATIVE_TOL:
        raise StabilityError(f"negative Arrow-Debreu price {values[worst]:.3e}, time step too large "
                             f"for the vol level", step=step, node=worst)
    return np.maximum(values, 0.0)


def forward_ad_1d(geometry: GridGeometry1D, diffusion: Diffusion1D, curve: YieldCurve,
                  method: InterpMethod = InterpMethod.STEFFEN) -> List[ADSheet1D]:
    if not geometry.is_rectangular:
        raise ParameterError("forward Arrow-Debreu pass needs a rectangular geometry")
    N, dt = geometry.steps, geometry.dt
    states = geometry.states(N)

    mu0, sigma0 = diffusion.coefficients(np.zeros(1), 0.0)
    values = first_step_ad(states, float(mu0[0]) * dt, float(sigma0[0]) * np.sqrt(dt), curve.discount(dt))
    sheets = [ADSheet1D(1, dt, states, clamp_ad(values, 1))]

    for n in range(1, N):
        t = geometry.time(n)
        mu_md, sigma_md = diffusion.coefficients(states, t)
        h = sigma_md * np.sqrt(SPACING_FACTOR_1D * dt)
        mu_up, sigma_up = diffusion.coefficients(states + h, t)
        mu_dn, sigma_dn = diffusion.coefficients(states - h, t)
        scale = 1.0 / (3.0 * sigma_md * sigma_md)
        q_up = (sigma_up ** 2 - mu_up * h) * scale
        q_dn = (sigma_dn ** 2 + mu_dn * h) * scale

        p_up = interpolate_ad(states, values, states + h, geometry.dx, method)
        p_dn = interpolate_ad(states, values, states - h, geometry.dx, method)
        values = curve.step_discount(t, t + dt) * (q_up * p_up + values / 3.0 + q_dn * p_dn)
        values = clamp_ad(values, n + 1)
        sheets.append(ADSheet1D(n + 1, t + dt, states, values))
        logger.debug(f"AD step {n + 1}: mass={values.sum():.6f}")
    return sheets
