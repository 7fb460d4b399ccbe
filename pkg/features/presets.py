"""
Named market presets and one example job per model.

Presets are plain parameter dicts so they can be written into job files inline;
surface, curve, hull_white and heston turn a preset name or an inline dict into model objects.
"""

import logging
from typing import Any, Dict, List, Union

from core.config import PricingConfig
from core.errors import ConfigError, ParameterError
from core.hybrid import HestonParams, HullWhiteParams
from core.market import LocalVolSurface, SSVISurface, YieldCurve

logger = logging.getLogger(__name__)

SPOT = 100.0

ASSETS: Dict[str, Dict[str, float]] = {
    "asset1": {"spot": SPOT, "v0": 0.25, "v1": 0.25, "c": 5.0, "rho_skew": 0.8, "a": -0.718, "b": 0.424},
    "asset2": {"spot": SPOT, "v0": 0.20, "v1": 0.20, "c": 5.0, "rho_skew": 0.8, "a": -0.299, "b": 0.451},
    "asset3": {"spot": SPOT, "v0": 0.30, "v1": 0.30, "c": 5.0, "rho_skew": 0.8, "a": 0.0, "b": 0.392},
}

CURVES: Dict[str, Dict[str, float]] = {
    "zero": {"r0": 0.0, "r1": 0.0, "c": 1.0},
    "default": {"r0": 0.02, "r1": 0.04, "c": 1.0},
}

HULL_WHITE: Dict[str, Dict[str, float]] = {
    "hw_default": {"k": 0.05, "sigma_r": 0.02, "rho_sr": -0.3},
}

HESTON: Dict[str, Dict[str, float]] = {
    "heston_default": {"v0": 0.029, "v_bar": 0.029, "sigma_v": 0.35, "k_v": 3.0, "rho_sv": -0.5},
}


def _resolve(ref: Union[str, Dict[str, float]], table: Dict[str, Dict[str, float]], kind, where: str):
    if isinstance(ref, str):
        if ref not in table:
            raise ConfigError(f"unknown preset {ref!r} (one of {', '.join(sorted(table))})", field=where)
        params = table[ref]
    else:
        params = ref
    try:
        return kind(**params)
    except TypeError as e:
        raise ConfigError(f"bad parameters for {kind.__name__}: {e}", field=where) from e
    except ParameterError as e:
        raise ConfigError(str(e), field=where) from e


def surface(ref, where: str = "market.assets") -> SSVISurface:
    return _resolve(ref, ASSETS, SSVISurface, where)


def curve(ref, where: str = "market.curve") -> YieldCurve:
    return _resolve(ref, CURVES, YieldCurve, where)


def hull_white(ref, where: str = "market.hw") -> HullWhiteParams:
    return _resolve(ref, HULL_WHITE, HullWhiteParams, where)


def heston(ref, where: str = "market.heston") -> HestonParams:
    return _resolve(ref, HESTON, HestonParams, where)


def local_vols(config: PricingConfig) -> List[LocalVolSurface]:
    yc = curve(config.market.curve)
    return [LocalVolSurface(surface(ref, f"market.assets[{i}]"), yc)
            for i, ref in enumerate(config.market.assets)]


def example_configs() -> Dict[str, Dict[str, Any]]:
    """One runnable job per model tag, using the settings of the published tables"""
    call = {"kind": "call", "strike": 100.0}
    examples = {
        "lv1d": {"model": "lv1d", "market": {"assets": ["asset1"], "curve": "zero"},
                 "payoff": call, "maturity": 1.0, "steps": 100, "grid_finess": 0.5},
        "lv2d": {"model": "lv2d", "market": {"assets": ["asset1", "asset2"], "curve": "zero",
                                             "correlation": 0.5},
                 "payoff": {"kind": "basket", "strike": 100.0, "weights": [0.5, 0.5]},
                 "maturity": 1.0, "steps": 12, "grid_finess": [0.5, 0.5], "interp": "bicubic"},
        "lv3d": {"model": "lv3d", "market": {"assets": ["asset1", "asset2", "asset3"], "curve": "zero",
                                             "correlation": [0.5, 0.5, 0.5]},
                 "payoff": {"kind": "bestof", "strike": 100.0},
                 "maturity": 1.0, "steps": 12, "grid_finess": [0.2, 0.2, 0.2]},
        "hw_hybrid": {"model": "hw_hybrid", "market": {"curve": "default", "hw": "hw_default", "sigma_s": 0.2},
                      "payoff": call, "maturity": 1.0, "steps": 50, "grid_finess": [0.5, 0.5]},
        "heston": {"model": "heston", "market": {"curve": "zero", "heston": "heston_default"},
                   "payoff": {"kind": "call", "strike": 90.0}, "maturity": 1.0, "steps": 50,
                   "grid_finess": [1.0, 1.0]},
        "glv": {"model": "glv", "market": {"assets": ["asset1"], "curve": "default", "hw": "hw_default"},
                "payoff": call, "maturity": 1.0, "steps": 52, "grid_finess": [0.33, 0.5]},
        "mc_lv": {"model": "mc_lv", "market": {"assets": ["asset1", "asset2"], "curve": "zero",
                                               "correlation": 0.5},
                  "payoff": {"kind": "basket", "strike": 100.0, "weights": [0.5, 0.5]},
                  "maturity": 1.0, "mc": {"paths": 200_000, "steps_per_year": 100, "seed": 7}},
        "mc_heston": {"model": "mc_heston", "market": {"curve": "zero", "heston": "heston_default"},
                      "payoff": call, "maturity": 1.0, "mc": {"paths": 200_000, "seed": 7}},
        "mc_hw": {"model": "mc_hw", "market": {"curve": "default", "hw": "hw_default", "sigma_s": 0.2},
                  "payoff": call, "maturity": 1.0, "mc": {"paths": 200_000, "seed": 7}},
    }
    for tag, data in examples.items():
        data["name"] = f"example_{tag}"
    return examples
