"""
Regenerates the published result tables.

Every table is a pandas frame indexed by strike. Each value column comes twice: the
display column rounded the way the published tables quote it (two decimals, vol
differences in percent) and a `_full` column at full precision. Monte Carlo columns
(`_mc`, `_mc_full`, `_mc_stderr`) are added on request.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.engine1d import (ValueSheet1D, build_geometry_1d, curve_forward, local_vol_diffusion,
                           price_backward_1d)
from core.engine_nd import build_geometry_nd, price_backward_2d, price_backward_3d
from core.errors import ConfigError
from core.glv import calibrate_glv, price_glv
from core.hybrid import build_heston_geometry, build_hybrid_geometry_hw, price_heston, price_hybrid_hw
from core.market import (LocalVolSurface, bs_implied_vol, forward_price, hw_adjusted_vol,
                         implied_vol)
from core.mc import McConfig, mc_price_heston, mc_price_lv
from core import payoffs
from features import presets

logger = logging.getLogger(__name__)

DISPLAY_DECIMALS = 2


@dataclass(frozen=True)
class TableSpec:
    table_id: str
    description: str
    strikes: Tuple[float, ...]
    maturities: Tuple[float, ...]
    grid_finess: Tuple[float, ...]
    steps: int
    curve: str = "zero"
    assets: Tuple[str, ...] = ("asset1",)
    correlation: Optional[object] = None
    products: Tuple[str, ...] = ()
    sigma_s: float = 0.2
    # maturity a strike first appears at; strikes absent here appear at every maturity
    first_maturity: Dict[float, float] = field(default_factory=dict)

    def cells(self) -> List[Tuple[float, float]]:
        return [(K, T) for K in self.strikes for T in self.maturities
                if T >= self.first_maturity.get(K, 0.0)]


TABLES: Dict[str, TableSpec] = {
    "lv1d_calib": TableSpec(
        "lv1d_calib", "local vol calibration: grid minus market implied vol (%)",
        strikes=(50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150, 200),
        maturities=(0.25, 0.5, 1.0, 2.0, 3.0, 5.0), grid_finess=(0.5,), steps=100,
        first_maturity={50: 2.0, 60: 1.0, 70: 0.5, 130: 0.5, 140: 1.0, 150: 2.0, 200: 3.0}),
    "basket2d": TableSpec(
        "basket2d", "two-asset basket, best-of and spread calls", strikes=(80, 100, 120), maturities=(1.0,),
        grid_finess=(0.5, 0.5), steps=12, assets=("asset1", "asset2"), correlation=0.5,
        products=("basket", "best", "spread")),
    "basket3d": TableSpec(
        "basket3d", "three-asset basket and best-of calls", strikes=(80, 100, 120), maturities=(1.0,),
        grid_finess=(0.2, 0.2, 0.2), steps=12, assets=("asset1", "asset2", "asset3"),
        correlation=(0.5, 0.5, 0.5), products=("basket", "best")),
    "hw_adj": TableSpec(
        "hw_adj", "Hull-White hybrid: grid implied vol minus closed form (%)", strikes=(90, 100, 110),
        maturities=(0.5, 1.0, 3.0), grid_finess=(0.5, 0.5), steps=50, curve="default"),
    "heston": TableSpec(
        "heston", "Heston calls", strikes=(90, 100, 110), maturities=(1.0,), grid_finess=(1.0, 1.0),
        steps=50, products=("call",)),
    "glv_calib": TableSpec(
        "glv_calib", "generalized local vol calibration: grid minus market implied vol (%), steps per year",
        strikes=(70, 80, 90, 100, 110, 120, 130), maturities=(1.0, 2.0, 3.0, 5.0), grid_finess=(0.33, 0.5),
        steps=52, curve="default"),
}


def table_spec(table_id: str, steps: Optional[int] = None, grid_finess: Optional[float] = None,
               correlation=None) -> TableSpec:
    if table_id not in TABLES:
        raise ConfigError(f"unknown table {table_id!r} (one of {', '.join(TABLES)})", field="table")
    spec = TABLES[table_id]
    changes = {}
    if steps is not None:
        changes["steps"] = int(steps)
    if grid_finess is not None:
        changes["grid_finess"] = (float(grid_finess),) * len(spec.grid_finess)
    if correlation is not None:
        if spec.correlation is None:
            raise ConfigError(f"table {table_id} has no correlation to override", field="rho")
        changes["correlation"] = correlation if len(spec.assets) == 2 else (correlation,) * 3
    return replace(spec, **changes)


def otm_implied_vol(price_fn: Callable[[payoffs.Payoff], float], strike: float, maturity: float,
                    forward: float, df: float) -> float:
    """Implied vol from the out-of-the-money option: puts below the forward, calls above"""
    is_call = strike >= forward
    premium = price_fn(payoffs.call(strike) if is_call else payoffs.put(strike))
    return bs_implied_vol(premium, forward, strike, maturity, df, is_call)


def _vol_frame(spec: TableSpec, diffs: Dict[Tuple[float, float], float]) -> pd.DataFrame:
    frame = pd.DataFrame(index=pd.Index(spec.strikes, name="strike"))
    for T in spec.maturities:
        column = f"T={T:g}"
        full = [diffs.get((K, T), np.nan) for K in spec.strikes]
        frame[column] = np.round(full, DISPLAY_DECIMALS)
        frame[f"{column}_full"] = full
    return frame


def _premium_columns(frame: pd.DataFrame, name: str, values: Sequence[float]) -> None:
    frame[name] = np.round(values, DISPLAY_DECIMALS)
    frame[f"{name}_full"] = list(values)


def lv1d_calib(spec: TableSpec) -> pd.DataFrame:
    yc = presets.curve(spec.curve)
    lv = LocalVolSurface(presets.surface(spec.assets[0]), yc)
    diffusion = local_vol_diffusion(lv, curve_forward(yc, lv.spot))
    diffs = {}
    for T in spec.maturities:
        strikes = [K for K, m in spec.cells() if m == T]
        if not strikes:
            continue
        geometry = build_geometry_1d(lv.surface, yc, T, spec.steps, spec.grid_finess[0])
        F, df = float(forward_price(yc, lv.spot, T)), float(yc.discount(T))
        for K in strikes:
            vol = otm_implied_vol(lambda p: price_backward_1d(geometry, diffusion, p, yc).value, K, T, F, df)
            diffs[(K, T)] = 100.0 * (vol - implied_vol(lv.surface, K, T))
    return _vol_frame(spec, diffs)


def table_sheets(table_id: str, steps: Optional[int] = None,
                 grid_finess: Optional[float] = None) -> List[ValueSheet1D]:
    """Value sheets of the at-the-money call at the longest maturity of a one-factor table"""
    if table_id != "lv1d_calib":
        raise ConfigError(f"value sheets are dumped for the lv1d_calib table only, not {table_id!r}",
                          field="dump_sheets")
    spec = table_spec(table_id, steps, grid_finess)
    yc = presets.curve(spec.curve)
    lv = LocalVolSurface(presets.surface(spec.assets[0]), yc)
    T = max(spec.maturities)
    geometry = build_geometry_1d(lv.surface, yc, T, spec.steps, spec.grid_finess[0])
    diffusion = local_vol_diffusion(lv, curve_forward(yc, lv.spot))
    return price_backward_1d(geometry, diffusion, payoffs.call(lv.spot), yc, keep_sheets=True).sheets


def _multi_payoff(product: str, strike: float, dims: int) -> payoffs.MultiPayoff:
    if product == "basket":
        return payoffs.basket_call(strike, [1.0 / dims] * dims)
    if product == "best":
        return payoffs.best_of_call(strike)
    return payoffs.spread_call(strike)


def basket_table(spec: TableSpec, mc: Optional[McConfig] = None) -> pd.DataFrame:
    yc = presets.curve(spec.curve)
    lvs = [LocalVolSurface(presets.surface(name), yc) for name in spec.assets]
    dims, T = len(lvs), spec.maturities[0]
    geometry = build_geometry_nd([lv.surface for lv in lvs], yc, T, spec.steps, spec.grid_finess,
                                 spec.correlation)
    diffusions = [local_vol_diffusion(lv, curve_forward(yc, lv.spot)) for lv in lvs]
    pricer = price_backward_2d if dims == 2 else price_backward_3d

    frame = pd.DataFrame(index=pd.Index(spec.strikes, name="strike"))
    for product in spec.products:
        grid = [pricer(geometry, diffusions, _multi_payoff(product, K, dims), yc).value for K in spec.strikes]
        _premium_columns(frame, f"{product}_grid", grid)
        if mc is not None:
            results = [mc_price_lv(lvs, spec.correlation, _multi_payoff(product, K, dims), T, mc, yc)
                       for K in spec.strikes]
            _premium_columns(frame, f"{product}_mc", [r.estimate for r in results])
            frame[f"{product}_mc_stderr"] = [r.stderr for r in results]
    return frame


def hw_adj(spec: TableSpec) -> pd.DataFrame:
    yc = presets.curve(spec.curve)
    hw = presets.hull_white("hw_default")
    spot = presets.SPOT
    diffs = {}
    for T in spec.maturities:
        geometry = build_hybrid_geometry_hw(yc, hw, spec.sigma_s, spot, T, spec.steps, spec.grid_finess)
        F, df = float(forward_price(yc, spot, T)), float(yc.discount(T))
        target = hw_adjusted_vol(spec.sigma_s, hw.sigma_r, hw.k, hw.rho_sr, T)
        for K, m in spec.cells():
            if m != T:
                continue
            vol = otm_implied_vol(lambda p: price_hybrid_hw(geometry, yc, hw, spec.sigma_s, p).value, K, T, F, df)
            diffs[(K, T)] = 100.0 * (vol - target)
    return _vol_frame(spec, diffs)


def heston_table(spec: TableSpec, mc: Optional[McConfig] = None) -> pd.DataFrame:
    yc = presets.curve(spec.curve)
    heston = presets.heston("heston_default")
    T = spec.maturities[0]
    geometry = build_heston_geometry(heston, presets.SPOT, T, spec.steps, spec.grid_finess, yc)
    frame = pd.DataFrame(index=pd.Index(spec.strikes, name="strike"))
    _premium_columns(frame, "call_grid",
                     [price_heston(geometry, heston, payoffs.call(K), yc).value for K in spec.strikes])
    if mc is not None:
        results = [mc_price_heston(heston, payoffs.call(K), T, mc, presets.SPOT, yc) for K in spec.strikes]
        _premium_columns(frame, "call_mc", [r.estimate for r in results])
        frame["call_mc_stderr"] = [r.stderr for r in results]
    return frame


def glv_calib(spec: TableSpec) -> pd.DataFrame:
    yc = presets.curve(spec.curve)
    lv = LocalVolSurface(presets.surface(spec.assets[0]), yc)
    hw = presets.hull_white("hw_default")
    diffs = {}
    for T in spec.maturities:
        steps = max(1, int(round(spec.steps * T)))
        vol_field = calibrate_glv(lv, hw, T, steps, spec.grid_finess)
        F, df = float(forward_price(yc, lv.spot, T)), float(yc.discount(T))
        for K, m in spec.cells():
            if m != T:
                continue
            vol = otm_implied_vol(lambda p: price_glv(vol_field, hw, p, yc).value, K, T, F, df)
            diffs[(K, T)] = 100.0 * (vol - implied_vol(lv.surface, K, T))
    return _vol_frame(spec, diffs)


def run_table(table_id: str, with_mc: bool = False, mc: Optional[McConfig] = None,
              steps: Optional[int] = None, grid_finess: Optional[float] = None,
              correlation=None) -> pd.DataFrame:
    spec = table_spec(table_id, steps, grid_finess, correlation)
    start = time.perf_counter()
    mc = (mc or McConfig()) if with_mc else None
    if with_mc and not spec.products:
        logger.warning(f"table {table_id} has no Monte Carlo columns; --with-mc ignored")

    if table_id == "lv1d_calib":
        frame = lv1d_calib(spec)
    elif table_id in ("basket2d", "basket3d"):
        frame = basket_table(spec, mc)
    elif table_id == "hw_adj":
        frame = hw_adj(spec)
    elif table_id == "heston":
        frame = heston_table(spec, mc)
    else:
        frame = glv_calib(spec)
    logger.info(f"table {table_id}: {frame.shape[0]} rows in {time.perf_counter() - start:.2f}s")
    return frame


def write_table(frame: pd.DataFrame, out: Optional[str] = None, as_json: bool = False) -> str:
    """Render as CSV (or JSON records); written to `out` when given, returned either way"""
    if as_json:
        text = frame.reset_index().to_json(orient="records", double_precision=15)
    else:
        text = frame.to_csv(float_format=None, lineterminator="\n")
    if out:
        with open(out, "w") as f:
            f.write(text)
        logger.info(f"Wrote table to {out}")
    return text
