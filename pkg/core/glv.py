"""
Generalized local volatility: local vol adjusted for Hull-White rates.

Calibration runs forward on a rectangular hybrid grid. At each step the current
Arrow-Debreu sheet gives, for every equity node taken as a strike, the expectation
E[r D 1(S > K)]; that turns the Dupire vol into the adjusted vol for the step, which
drives the next Fokker-Planck step. Pricing then goes backward on the same grid.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from core.engine1d import BackwardResult
from core.errors import ParameterError, StabilityError
from core.hybrid import (HullWhiteDynamics, HullWhiteParams, HybridGeometry,
                         build_hybrid_geometry_surface, hw_phi, hw_phi_integral,
                         price_backward_hybrid)
from core.interp import InterpMethod, Lattice2D, eval_cubic_linear
from core.market import (DUPIRE_MIN_T, LocalVolSurface, clamp_local_vol, dupire_local_vol,
                         dupire_terms, market_digital)
from core.payoffs import Payoff

logger = logging.getLogger(__name__)

FP_SPACING_FACTOR = 9.0 / 4.0
MAX_FP_WEIGHT = 1.5
VEGA_CUTOFF = 1e-6        # relative to spot
MAX_ADJ_RATIO = 0.5       # |AdjFactor / Nume| beyond this keeps the Dupire vol
AD_NEGATIVE_TOL = 1e-12
COPULA_CLIP = 1e-12


@dataclass
class ADSheet2D:
    step: int
    time: float
    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.values.sum())


@dataclass
class AdjustedVolField:
    """Adjusted vol on every equity node for steps 0..N-1, beside the Dupire vol it came from"""
    geometry: HybridGeometry
    x1: np.ndarray
    sigma: np.ndarray
    dupire: np.ndarray
    masses: np.ndarray
    cutoffs: np.ndarray
    ad_sheets: List[ADSheet2D] = field(default_factory=list, repr=False)

    @property
    def spot(self) -> float:
        return float(self.geometry.equity.forwards[0])

    def sigma_at(self, step: int, x1) -> np.ndarray:
        """Row `step` read at arbitrary equity states, flat beyond the grid"""
        return np.interp(np.asarray(x1, dtype=float), self.x1, self.sigma[step])

    def to_frame(self) -> pd.DataFrame:
        steps, nodes = self.sigma.shape
        dt = self.geometry.dt
        return pd.DataFrame({
            "step": np.repeat(np.arange(steps), nodes),
            "time": np.repeat(np.arange(steps) * dt, nodes),
            "node": np.tile(np.arange(nodes), steps),
            "strike": np.tile(self.spot * np.exp(self.x1), steps),
            "sigma_adj": self.sigma.ravel(),
            "sigma_dupire": self.dupire.ravel(),
        })

    def mass_frame(self) -> pd.DataFrame:
        steps = np.arange(1, self.masses.size + 1)
        return pd.DataFrame({"step": steps, "time": steps * self.geometry.dt, "ad_mass": self.masses})


# ---------------------------------------------------------------------------
# Forward Fokker-Planck
# ---------------------------------------------------------------------------

def binormal_start(geometry: HybridGeometry, lv: LocalVolSurface, hw: HullWhiteParams) -> np.ndarray:
    """
    AD prices at t = dt.

    The equity marginal is priced off the market digitals at dt, so the first sheet
    already carries the smile. The rate is joined to it through a normal copula with
    correlation rho_sr; without rate vol the whole marginal sits on the x2 = 0 row.
    """
    x1, x2 = geometry.states(1)
    dt = geometry.dt
    discount = float(lv.curve.discount(dt))
    edges = 0.5 * (x1[1:] + x1[:-1])
    digitals = np.concatenate([[discount], market_digital(lv, lv.spot * np.exp(edges), dt), [0.0]])
    marginal = np.maximum(-np.diff(digitals), 0.0)
    if not np.isfinite(marginal).all() or marginal.sum() <= 0.0:
        raise StabilityError("no equity marginal at the first step", step=1)
    marginal *= discount / marginal.sum()

    ad = np.zeros((x1.size, x2.size))
    if hw.sigma_r == 0.0:
        ad[:, int(np.argmin(np.abs(x2)))] = marginal
        return ad

    below = np.cumsum(marginal) - 0.5 * marginal
    z1 = norm.ppf(np.clip(below / discount, COPULA_CLIP, 1.0 - COPULA_CLIP))
    sd2 = hw.sigma_r * np.sqrt(dt)
    mean2 = hw.rho_sr * sd2 * z1
    sd_cond = sd2 * np.sqrt(max(1.0 - hw.rho_sr ** 2, 0.0))
    if sd_cond == 0.0:
        nearest = np.abs(x2[None, :] - mean2[:, None]).argmin(axis=1)
        ad[np.arange(x1.size), nearest] = marginal
        return ad

    edges2 = np.concatenate([[-np.inf], 0.5 * (x2[1:] + x2[:-1]), [np.inf]])
    rows = np.maximum(np.diff(norm.cdf((edges2[None, :] - mean2[:, None]) / sd_cond), axis=1), 0.0)
    rows /= rows.sum(axis=1, keepdims=True)
    return marginal[:, None] * rows


def _clamp_ad(values: np.ndarray, step: int) -> np.ndarray:
    worst = np.unravel_index(int(np.argmin(values)), values.shape)
    if values[worst] < -AD_NEGATIVE_TOL:
        raise StabilityError(f"negative Arrow-Debreu price {values[worst]:.3e}",
                             step=step, node=tuple(int(i) for i in worst))
    return np.maximum(values, 0.0)


def fp_step_2d(ad: np.ndarray, geometry: HybridGeometry, sigma_row: np.ndarray, hw: HullWhiteParams,
               curve, step: int) -> np.ndarray:
    """
    One explicit Fokker-Planck step of the discounted equity/rate density.

    Each target node reads the current sheet at stencil points spaced by the node-local
    dx1 = sigma*sqrt(9/4 dt) and dx2 = sigma_r*sqrt(9/4 dt), so without correlation the
    centre weight is 1/9 - r*dt. Without rate vol the rate spacing falls back to the grid step.

    The cross derivative uses the seven-point difference along the diagonal that matches
    the sign of rho_sr, which keeps every weight non-negative for |rho_sr| below the
    local vol ratio between neighbours.
    """
    x1, x2 = geometry.states(step)
    t, dt = geometry.time(step), geometry.dt
    col, row = x1[:, None], x2[None, :]
    sigma = np.asarray(sigma_row, dtype=float)[:, None]
    sr = hw.sigma_r
    rate_dt = row * dt + hw_phi_integral(curve, hw, t, t + dt)

    dx1 = sigma * np.sqrt(FP_SPACING_FACTOR * dt)
    dx2 = sr * np.sqrt(FP_SPACING_FACTOR * dt) if sr > 0.0 else geometry.second.dx
    sig_up = np.interp(col + dx1, x1, sigma_row)
    sig_dn = np.interp(col - dx1, x1, sigma_row)

    weights = {
        (0, 0): 1.0 - rate_dt - sigma * sigma * dt / dx1 ** 2 - sr * sr * dt / dx2 ** 2,
        (1, 0): dt * (-(rate_dt / dt - 0.5 * sig_up ** 2) / (2.0 * dx1) + 0.5 * sig_up ** 2 / dx1 ** 2),
        (-1, 0): dt * ((rate_dt / dt - 0.5 * sig_dn ** 2) / (2.0 * dx1) + 0.5 * sig_dn ** 2 / dx1 ** 2),
        (0, 1): dt * (hw.k * (row + dx2) / (2.0 * dx2) + 0.5 * sr * sr / dx2 ** 2),
        (0, -1): dt * (-hw.k * (row - dx2) / (2.0 * dx2) + 0.5 * sr * sr / dx2 ** 2),
    }
    if sr > 0.0 and hw.rho_sr != 0.0:
        cross = dt * abs(hw.rho_sr) * sr / (2.0 * dx1 * dx2)
        diag = 1 if hw.rho_sr > 0.0 else -1
        weights[(0, 0)] = weights[(0, 0)] + 2.0 * cross * sigma
        weights[(1, 0)] = weights[(1, 0)] - cross * sig_up
        weights[(-1, 0)] = weights[(-1, 0)] - cross * sig_dn
        weights[(0, 1)] = weights[(0, 1)] - cross * sigma
        weights[(0, -1)] = weights[(0, -1)] - cross * sigma
        weights[(1, diag)] = cross * sig_up
        weights[(-1, -diag)] = cross * sig_dn

    lattice = Lattice2D(x1, x2, ad).with_row_slopes(InterpMethod.STEFFEN)
    shape = (x1.size, x2.size)
    out = np.zeros(shape)
    for (a, b), q in weights.items():
        q = np.broadcast_to(q, shape)
        big = np.abs(q) > MAX_FP_WEIGHT
        if big.any():
            node = tuple(int(i) for i in np.unravel_index(int(np.argmax(big)), shape))
            raise StabilityError(f"Fokker-Planck weight {q[node]:.3f} out of range, time step too large",
                                 step=step, node=node)
        if a == 0 and b == 0:
            out += q * ad
            continue
        q1 = np.broadcast_to(col + a * dx1, shape)
        q2 = np.broadcast_to(row + b * dx2, shape)
        inside = (q1 >= x1[0]) & (q1 <= x1[-1]) & (q2 >= x2[0]) & (q2 <= x2[-1])
        neighbour = eval_cubic_linear(lattice, np.clip(q1, x1[0], x1[-1]), np.clip(q2, x2[0], x2[-1]))
        out += q * np.where(inside, neighbour, 0.0)
    return _clamp_ad(out, step + 1)


# ---------------------------------------------------------------------------
# Adjustment
# ---------------------------------------------------------------------------

def _suffix_above(per_node: np.ndarray) -> np.ndarray:
    above = np.cumsum(per_node[::-1])[::-1]
    return above - 0.5 * per_node


def expected_rate_above(ad: np.ndarray, x2: np.ndarray, phi_rate: float) -> np.ndarray:
    """
    E[r D 1(S > K)] for every equity node taken as the strike, the node itself counting
    one half. One suffix sum from the top of the grid down.
    """
    return _suffix_above((ad * (x2[None, :] + phi_rate)).sum(axis=1))


def digital_above(ad: np.ndarray) -> np.ndarray:
    """E[D 1(S > K)] off the sheet, same convention as expected_rate_above"""
    return _suffix_above(ad.sum(axis=1))


def adj_factor_row(ad: np.ndarray, lv: LocalVolSurface, x1: np.ndarray, x2: np.ndarray,
                   hw: HullWhiteParams, t: float, phi_rate: float, smile_digital: bool = False):
    """
    AdjFactor = -K (E[r D 1(S > K)] - f E[D 1(S > K)]) per equity node, with the Dupire
    terms it is combined with.

    The digital is read off the same sheet as the rate expectation, so deterministic
    rates give exactly zero. smile_digital=True takes it from the market smile instead,
    Df N(d2) - Vega dsigma/dK.

    Returns (adj, terms, strikes).
    """
    strikes = lv.spot * np.exp(x1)
    terms = dupire_terms(lv, strikes, t)
    if smile_digital:
        digital = terms.df * norm.cdf(terms.d2) - terms.vega * terms.dsigma_dk
    else:
        digital = digital_above(ad)
    adj = strikes * (terms.forward_rate * digital - expected_rate_above(ad, x2, phi_rate))
    return adj, terms, strikes


def adjusted_vol_row(ad: np.ndarray, lv: LocalVolSurface, x1: np.ndarray, x2: np.ndarray,
                     hw: HullWhiteParams, t: float, phi_rate: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    (adjusted vol, Dupire vol, number of nodes held at Dupire).

    A node keeps its Dupire vol where the Vega is below the cutoff or where
    |AdjFactor / Nume| exceeds MAX_ADJ_RATIO.
    """
    adj, terms, strikes = adj_factor_row(ad, lv, x1, x2, hw, t, phi_rate)
    with np.errstate(divide="ignore", invalid="ignore"):
        local_var = terms.nume / terms.deno
        dupire = clamp_local_vol(lv, local_var, terms.deno, t)
        ratio = adj / terms.nume
        adjusted = dupire ** 2 * (1.0 + ratio)
    adjusted = clamp_local_vol(lv, adjusted, terms.deno, t)
    held = (terms.vega < VEGA_CUTOFF * lv.spot) | ~(np.abs(ratio) <= MAX_ADJ_RATIO)
    adjusted = np.where(held, dupire, adjusted)
    return adjusted, dupire, int(held.sum())


def glv_geometry(lv: LocalVolSurface, hw: HullWhiteParams, maturity: float, steps: int,
                 grid_finess: Tuple[float, float] = (0.33, 0.5)) -> HybridGeometry:
    return build_hybrid_geometry_surface(lv.surface, lv.curve, hw, maturity, steps, grid_finess).rectangular()


def calibrate_glv(lv: LocalVolSurface, hw: HullWhiteParams, maturity: float, steps: int,
                  grid_finess: Tuple[float, float] = (0.33, 0.5),
                  geometry: Optional[HybridGeometry] = None, keep_ad: bool = False) -> AdjustedVolField:
    start = time.perf_counter()
    geometry = geometry or glv_geometry(lv, hw, maturity, steps, grid_finess)
    if not geometry.is_rectangular:
        raise ParameterError("generalized local vol calibration needs a rectangular grid")
    N = geometry.steps
    x1, x2 = geometry.states(N)
    curve = lv.curve

    sigma = np.empty((N, x1.size))
    dupire = np.empty((N, x1.size))
    cutoffs = np.zeros(N, dtype=int)
    masses = np.empty(N)
    sigma[0] = dupire[0] = dupire_local_vol(lv, lv.spot * np.exp(x1), DUPIRE_MIN_T)

    ad = _clamp_ad(binormal_start(geometry, lv, hw), 1)
    masses[0] = ad.sum()
    sheets = [ADSheet2D(1, geometry.dt, x1, x2, ad)] if keep_ad else []

    for n in range(1, N):
        t = geometry.time(n)
        phi_rate = hw_phi(curve, hw, t)
        sigma[n], dupire[n], cutoffs[n] = adjusted_vol_row(ad, lv, x1, x2, hw, t, phi_rate)
        ad = fp_step_2d(ad, geometry, sigma[n], hw, curve, n)
        masses[n] = ad.sum()
        if keep_ad:
            sheets.append(ADSheet2D(n + 1, t + geometry.dt, x1, x2, ad))
        logger.debug(f"GLV step {n}: mass={masses[n]:.6f}, held at Dupire={cutoffs[n]}")

    if cutoffs.any():
        logger.info(f"GLV held {int(cutoffs.sum())} node-steps at the Dupire vol (Vega cutoff or adjustment gate)")
    logger.info(f"GLV calibration: {N} steps, {x1.size}x{x2.size} nodes, "
                f"{time.perf_counter() - start:.3f}s")
    return AdjustedVolField(geometry, x1, sigma, dupire, masses, cutoffs, sheets)


def price_glv(vol_field: AdjustedVolField, hw: HullWhiteParams, payoff: Payoff, curve,
              method: InterpMethod = InterpMethod.STINEMAN) -> BackwardResult:
    """Backward hybrid sweep with the calibrated vol in drift and diffusion"""
    dynamics = HullWhiteDynamics(curve, hw, lambda step, x1: vol_field.sigma_at(step, x1))
    return price_backward_hybrid(vol_field.geometry, dynamics, payoff, method)
