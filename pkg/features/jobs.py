"""
Runs one PricingConfig through the engine its model tag names.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Union

import numpy as np

from core.config import PricingConfig
from core.engine1d import ValueSheet1D, build_geometry_1d, curve_forward, local_vol_diffusion, price_backward_1d
from core.engine_nd import build_geometry_nd, price_backward_2d, price_backward_3d
from core.errors import ImpliedVolError
from core.glv import AdjustedVolField, calibrate_glv, price_glv
from core.hybrid import build_heston_geometry, build_hybrid_geometry_hw, price_heston, price_hybrid_hw
from core.interp import InterpMethod
from core.market import YieldCurve, bs_implied_vol, forward_price
from core.mc import McConfig, mc_price_heston, mc_price_hybrid_hw, mc_price_lv
from core import payoffs
from features import presets

logger = logging.getLogger(__name__)


@dataclass
class JobResult:
    model: str
    price: float
    implied_vol: Optional[float] = None
    stderr: Optional[float] = None
    elapsed: float = 0.0
    grid: Dict[str, Any] = field(default_factory=dict)
    sheets: List[ValueSheet1D] = field(default_factory=list, repr=False)
    vol_field: Optional[AdjustedVolField] = field(default=None, repr=False)

    def to_record(self) -> Dict[str, Any]:
        record = {"model": self.model, "price": self.price, "implied_vol": self.implied_vol,
                  "elapsed": round(self.elapsed, 6)}
        if self.stderr is not None:
            record["stderr"] = self.stderr
        if self.grid:
            record["grid"] = self.grid
        return record


def build_payoff(config: PricingConfig) -> Union[payoffs.Payoff, payoffs.MultiPayoff]:
    spec = config.payoff
    n = config.asset_count
    if spec.kind == "call":
        payoff = payoffs.call(spec.strike)
    elif spec.kind == "put":
        payoff = payoffs.put(spec.strike)
    elif spec.kind == "digital":
        payoff = payoffs.digital_call(spec.strike)
    elif spec.kind == "constant":
        payoff = payoffs.constant(spec.strike)
    elif spec.kind == "basket":
        payoff = payoffs.basket_call(spec.strike, spec.weights or [1.0 / n] * n)
    elif spec.kind == "basket_put":
        payoff = payoffs.basket_put(spec.strike, spec.weights or [1.0 / n] * n)
    elif spec.kind == "bestof":
        payoff = payoffs.best_of_call(spec.strike)
    else:
        payoff = payoffs.spread_call(spec.strike, spec.offset)
    if spec.american:
        payoff = payoffs.with_american_exercise(payoff)
    return payoff


def implied_vol_of(config: PricingConfig, price: float, spot: float, yc: YieldCurve) -> Optional[float]:
    """Black vol of a European call or put premium; None for every other payoff"""
    spec = config.payoff
    if spec.kind not in ("call", "put") or spec.american:
        return None
    T = config.maturity
    df = float(yc.discount(T))
    forward = float(forward_price(yc, spot, T))
    try:
        return bs_implied_vol(price, forward, spec.strike, T, df, spec.kind == "call")
    except ImpliedVolError as e:
        logger.warning(f"no implied vol for premium {price:.6f}: {e}")
        return None


def mc_settings(config: PricingConfig, threads: Optional[int] = None, seed: Optional[int] = None) -> McConfig:
    mc = config.mc
    return McConfig(paths=mc.paths, steps_per_year=mc.steps_per_year,
                    seed=mc.seed if seed is None else seed, antithetic=mc.antithetic, threads=threads)


def run_job(config: PricingConfig, threads: Optional[int] = None, seed: Optional[int] = None,
            keep_sheets: bool = False) -> JobResult:
    start = time.perf_counter()
    model = config.model
    yc = presets.curve(config.market.curve)
    payoff = build_payoff(config)
    T, N = config.maturity, config.steps
    method = InterpMethod.parse(config.interp) if config.interp else None
    spot = config.market.spot

    if model in ("lv1d", "lv2d", "lv3d", "glv", "mc_lv"):
        lvs = presets.local_vols(config)
        spot = lvs[0].spot

    if model == "lv1d":
        lv = lvs[0]
        geometry = build_geometry_1d(lv.surface, yc, T, N, config.grid_finess[0])
        result = price_backward_1d(geometry, local_vol_diffusion(lv, curve_forward(yc, lv.spot)), payoff, yc,
                                   method or InterpMethod.STINEMAN, keep_sheets=keep_sheets)
        job = JobResult(model, result.value, grid=geometry.stats(), sheets=result.sheets)
    elif model in ("lv2d", "lv3d"):
        geometry = build_geometry_nd([lv.surface for lv in lvs], yc, T, N, config.grid_finess,
                                     config.market.correlation)
        diffusions = [local_vol_diffusion(lv, curve_forward(yc, lv.spot)) for lv in lvs]
        if model == "lv2d":
            result = price_backward_2d(geometry, diffusions, payoff, yc, method or InterpMethod.BICUBIC)
        else:
            result = price_backward_3d(geometry, diffusions, payoff, yc)
        job = JobResult(model, result.value, grid=geometry.stats())
    elif model == "hw_hybrid":
        hw = presets.hull_white(config.market.hw)
        sigma_s = config.market.sigma_s
        geometry = build_hybrid_geometry_hw(yc, hw, sigma_s, spot, T, N, config.grid_finess)
        result = price_hybrid_hw(geometry, yc, hw, sigma_s, payoff, method or InterpMethod.STINEMAN)
        job = JobResult(model, result.value, grid=geometry.stats())
    elif model == "heston":
        heston = presets.heston(config.market.heston)
        geometry = build_heston_geometry(heston, spot, T, N, config.grid_finess, yc)
        result = price_heston(geometry, heston, payoff, yc, method or InterpMethod.STINEMAN)
        job = JobResult(model, result.value, grid=geometry.stats())
    elif model == "glv":
        hw = presets.hull_white(config.market.hw)
        vol_field = calibrate_glv(lvs[0], hw, T, N, config.grid_finess)
        result = price_glv(vol_field, hw, payoff, yc, method or InterpMethod.STINEMAN)
        job = JobResult(model, result.value, grid=vol_field.geometry.stats(), vol_field=vol_field)
    else:
        cfg = mc_settings(config, threads, seed)
        if model == "mc_lv":
            mc = mc_price_lv(lvs, config.market.correlation, payoff, T, cfg, yc)
        elif model == "mc_heston":
            mc = mc_price_heston(presets.heston(config.market.heston), payoff, T, cfg, spot, yc)
        else:
            mc = mc_price_hybrid_hw(yc, presets.hull_white(config.market.hw), config.market.sigma_s,
                                    payoff, T, cfg, spot)
        job = JobResult(model, mc.estimate, stderr=mc.stderr, grid={"paths": mc.paths})

    if config.asset_count == 1 or model not in ("lv2d", "lv3d", "mc_lv"):
        job.implied_vol = implied_vol_of(config, job.price, spot, yc)
    job.elapsed = time.perf_counter() - start
    logger.info(f"{model} job: price={job.price:.6f}, {job.elapsed:.3f}s")
    return job


def with_overrides(config: PricingConfig, steps: Optional[int] = None, grid_finess=None,
                   correlation=None) -> PricingConfig:
    """Copy of a job with command-line overrides applied"""
    changes: Dict[str, Any] = {}
    if steps is not None:
        changes["steps"] = steps
    if grid_finess is not None:
        changes["grid_finess"] = tuple(np.broadcast_to(grid_finess, (len(config.grid_finess),)).tolist())
    if correlation is not None:
        if config.asset_count == 3:
            correlation = [correlation] * 3
        changes["market"] = replace(config.market, correlation=correlation)
    return replace(config, **changes)
