"""
Pricing job configuration: parsing and validation of JSON job files, plus the store
of saved jobs under ~/.config/odgrid/configs.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from core.errors import ConfigError, ParameterError
from core.interp import InterpMethod

logger = logging.getLogger(__name__)

MODEL_TAGS = ("lv1d", "lv2d", "lv3d", "hw_hybrid", "heston", "glv", "mc_lv", "mc_heston", "mc_hw")
PAYOFF_KINDS = ("call", "put", "digital", "constant", "basket", "basket_put", "bestof", "spread")
MULTI_ASSET_KINDS = ("basket", "basket_put", "bestof", "spread")

# asset count per model; mc_lv takes 1 to 3
ASSET_COUNTS = {"lv1d": (1,), "lv2d": (2,), "lv3d": (3,), "glv": (1,), "mc_lv": (1, 2, 3)}
# grid axes per model, for grid_finess
GRID_AXES = {"lv1d": 1, "lv2d": 2, "lv3d": 3, "hw_hybrid": 2, "heston": 2, "glv": 2}
DEFAULT_FINESS = {"lv1d": 0.5, "lv2d": 0.5, "lv3d": 0.2, "hw_hybrid": 0.5, "heston": 1.0, "glv": (0.33, 0.5)}

MarketRef = Union[str, Dict[str, float]]


def _fail(path: str, message: str):
    raise ConfigError(message, field=path)


def _check_keys(data: Any, allowed: Sequence[str], path: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        _fail(path or "<root>", f"expected an object, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, f"unknown field (allowed: {', '.join(allowed)})")
    return data


def _number(data: Dict[str, Any], key: str, path: str, default=None, low=None, high=None,
            low_open: bool = False, integer: bool = False):
    where = f"{path}.{key}" if path else key
    value = data.get(key, default)
    if value is None:
        _fail(where, "required field is missing")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(where, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        _fail(where, f"expected an integer, got {value!r}")
    if low is not None and (value < low or (low_open and value == low)):
        _fail(where, f"must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None and value > high:
        _fail(where, f"must be <= {high}, got {value}")
    return int(value) if integer else float(value)


def _market_ref(value: Any, where: str) -> MarketRef:
    """A preset name or an inline parameter object"""
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        for key, item in value.items():
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                _fail(f"{where}.{key}", f"expected a number, got {item!r}")
        return dict(value)
    _fail(where, f"expected a preset name or a parameter object, got {value!r}")


def check_finess(value: Any, axes: int, where: str = "grid_finess") -> Tuple[float, ...]:
    values = value if isinstance(value, (list, tuple)) else [value] * axes
    if len(values) != axes:
        _fail(where, f"expected {axes} value(s), got {len(values)}")
    out = []
    for i, g in enumerate(values):
        name = where if axes == 1 else f"{where}[{i}]"
        if isinstance(g, bool) or not isinstance(g, (int, float)):
            _fail(name, f"expected a number, got {g!r}")
        if not 0.0 < g <= 1.0:
            _fail(name, f"grid_finess must lie in (0, 1], got {g}")
        out.append(float(g))
    return tuple(out)


@dataclass
class PayoffSpec:
    kind: str = "call"
    strike: float = 100.0
    weights: Optional[List[float]] = None
    offset: float = 100.0
    american: bool = False

    @classmethod
    def from_dict(cls, data: Any, path: str = "payoff") -> 'PayoffSpec':
        _check_keys(data, ("kind", "strike", "weights", "offset", "american"), path)
        kind = data.get("kind", "call")
        if kind not in PAYOFF_KINDS:
            _fail(f"{path}.kind", f"unknown payoff kind {kind!r} (one of {', '.join(PAYOFF_KINDS)})")
        low = None if kind == "spread" else 0.0
        strike = _number(data, "strike", path, 100.0, low=low, low_open=kind in ("call", "put", "digital"))
        weights = data.get("weights")
        if weights is not None:
            if not isinstance(weights, list) or not weights:
                _fail(f"{path}.weights", "expected a non-empty list of numbers")
            weights = [_number({"w": w}, "w", f"{path}.weights[{i}]") for i, w in enumerate(weights)]
        american = data.get("american", False)
        if not isinstance(american, bool):
            _fail(f"{path}.american", f"expected true or false, got {american!r}")
        return cls(kind, strike, weights, _number(data, "offset", path, 100.0), american)


@dataclass
class MarketSpec:
    assets: List[MarketRef] = field(default_factory=lambda: ["asset1"])
    curve: MarketRef = "default"
    correlation: Optional[Union[float, List[Any]]] = None
    hw: MarketRef = "hw_default"
    heston: MarketRef = "heston_default"
    sigma_s: float = 0.2
    spot: float = 100.0

    @classmethod
    def from_dict(cls, data: Any, path: str = "market") -> 'MarketSpec':
        _check_keys(data, ("assets", "curve", "correlation", "hw", "heston", "sigma_s", "spot"), path)
        assets = data.get("assets", ["asset1"])
        if isinstance(assets, (str, dict)):
            assets = [assets]
        if not isinstance(assets, list) or not assets:
            _fail(f"{path}.assets", "expected a preset name or a list of them")
        correlation = data.get("correlation")
        if correlation is not None:
            if isinstance(correlation, bool) or not isinstance(correlation, (int, float, list)):
                _fail(f"{path}.correlation", f"expected a number or a list, got {correlation!r}")
        return cls(
            assets=[_market_ref(a, f"{path}.assets[{i}]") for i, a in enumerate(assets)],
            curve=_market_ref(data.get("curve", "default"), f"{path}.curve"),
            correlation=correlation,
            hw=_market_ref(data.get("hw", "hw_default"), f"{path}.hw"),
            heston=_market_ref(data.get("heston", "heston_default"), f"{path}.heston"),
            sigma_s=_number(data, "sigma_s", path, 0.2, low=0.0),
            spot=_number(data, "spot", path, 100.0, low=0.0, low_open=True),
        )

    @property
    def asset_count(self) -> int:
        return len(self.assets)


@dataclass
class McSpec:
    paths: int = 500_000
    steps_per_year: int = 100
    seed: int = 20240101
    antithetic: bool = True

    @classmethod
    def from_dict(cls, data: Any, path: str = "mc") -> 'McSpec':
        _check_keys(data, ("paths", "steps_per_year", "seed", "antithetic"), path)
        antithetic = data.get("antithetic", True)
        if not isinstance(antithetic, bool):
            _fail(f"{path}.antithetic", f"expected true or false, got {antithetic!r}")
        paths = _number(data, "paths", path, 500_000, low=2, integer=True)
        if antithetic and paths % 2:
            _fail(f"{path}.paths", f"antithetic sampling needs an even path count, got {paths}")
        return cls(paths, _number(data, "steps_per_year", path, 100, low=1, integer=True),
                   _number(data, "seed", path, 20240101, low=0, integer=True), antithetic)


@dataclass
class OutputSpec:
    json: bool = False
    dump_sheets: Optional[str] = None
    dump_field: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Any, path: str = "output") -> 'OutputSpec':
        _check_keys(data, ("json", "dump_sheets", "dump_field"), path)
        as_json = data.get("json", False)
        if not isinstance(as_json, bool):
            _fail(f"{path}.json", f"expected true or false, got {as_json!r}")
        for key in ("dump_sheets", "dump_field"):
            if data.get(key) is not None and not isinstance(data[key], str):
                _fail(f"{path}.{key}", "expected a file path")
        return cls(as_json, data.get("dump_sheets"), data.get("dump_field"))


@dataclass
class PricingConfig:
    """One pricing job: model, market, payoff and grid or Monte Carlo settings"""
    model: str
    market: MarketSpec
    payoff: PayoffSpec
    maturity: float = 1.0
    steps: int = 100
    grid_finess: Tuple[float, ...] = (0.5,)
    interp: Optional[str] = None
    mc: McSpec = field(default_factory=McSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    name: Optional[str] = None

    FIELDS = ("name", "model", "market", "payoff", "maturity", "steps", "grid_finess", "interp", "mc", "output")

    @property
    def asset_count(self) -> int:
        return len(self.market.assets)

    @classmethod
    def from_dict(cls, data: Any) -> 'PricingConfig':
        _check_keys(data, cls.FIELDS, "")
        model = data.get("model")
        if model not in MODEL_TAGS:
            _fail("model", f"unknown model {model!r} (one of {', '.join(MODEL_TAGS)})")
        name = data.get("name")
        if name is not None and not isinstance(name, str):
            _fail("name", "expected a string")

        market = MarketSpec.from_dict(data.get("market", {}))
        payoff = PayoffSpec.from_dict(data.get("payoff", {}))
        maturity = _number(data, "maturity", "", 1.0, low=0.0, low_open=True)
        steps = _number(data, "steps", "", 100, low=1, integer=True)

        counts = ASSET_COUNTS.get(model, (1,))
        if market.asset_count not in counts:
            _fail("market.assets", f"model {model} takes {' or '.join(map(str, counts))} asset(s), "
                                   f"got {market.asset_count}")
        multi = market.asset_count > 1
        if multi and payoff.kind not in MULTI_ASSET_KINDS:
            _fail("payoff.kind", f"{payoff.kind!r} is a single-asset payoff; {model} with "
                                 f"{market.asset_count} assets takes {', '.join(MULTI_ASSET_KINDS)}")
        if not multi and payoff.kind in MULTI_ASSET_KINDS:
            _fail("payoff.kind", f"{payoff.kind!r} needs several assets")
        if payoff.kind == "spread" and market.asset_count != 2:
            _fail("payoff.kind", "spread takes exactly two assets")
        if payoff.weights is not None and len(payoff.weights) != market.asset_count:
            _fail("payoff.weights", f"expected {market.asset_count} weights, got {len(payoff.weights)}")
        if payoff.american and (multi or model.startswith("mc_")):
            _fail("payoff.american", "early exercise is priced on single-asset grids only")
        if multi and market.correlation is None:
            market.correlation = 0.5 if market.asset_count == 2 else [0.5, 0.5, 0.5]

        axes = GRID_AXES.get(model)
        finess = check_finess(data.get("grid_finess", DEFAULT_FINESS.get(model, 0.5)), axes or 1)

        interp = data.get("interp")
        if interp is not None:
            try:
                method = InterpMethod.parse(interp)
            except ParameterError as e:
                raise ConfigError(str(e), field="interp") from e
            allowed = {"lv2d": ("bicubic", "keys"), "lv3d": ("trilinear",)}.get(model)
            if allowed is None and not method.is_1d or allowed is not None and method.value not in allowed:
                _fail("interp", f"{method.value} does not apply to model {model}")
            interp = method.value

        return cls(model, market, payoff, maturity, steps, finess, interp,
                   McSpec.from_dict(data.get("mc", {})), OutputSpec.from_dict(data.get("output", {})), name)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "model": self.model,
            "market": asdict(self.market),
            "payoff": asdict(self.payoff),
            "maturity": self.maturity,
            "steps": self.steps,
            "grid_finess": list(self.grid_finess),
            "mc": asdict(self.mc),
            "output": asdict(self.output),
        }
        if self.name is not None:
            out["name"] = self.name
        if self.interp is not None:
            out["interp"] = self.interp
        return out


def load_config(path: str) -> PricingConfig:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    config = PricingConfig.from_dict(data)
    logger.debug(f"Loaded {config.model} config from {path}")
    return config


class ConfigStore:
    """Saved pricing jobs, one JSON file per name"""

    def __init__(self, app_name: str = "odgrid", base_dir: Optional[str] = None):
        home = os.path.expanduser("~")
        self.base_dir = base_dir or os.path.join(home, ".config", app_name)
        self.configs_dir = os.path.join(self.base_dir, "configs")
        os.makedirs(self.configs_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.configs_dir, f"{name}.json")

    def list_configs(self) -> List[str]:
        files = []
        for fn in os.listdir(self.configs_dir):
            if fn.endswith(".json"):
                files.append(fn[:-5])
        return sorted(files)

    def save(self, name: str, config: Union[PricingConfig, Dict[str, Any]]) -> bool:
        if not name or os.sep in name:
            raise ConfigError(f"invalid config name {name!r}")
        if isinstance(config, dict):
            config = PricingConfig.from_dict(config)
        data = config.to_dict()
        data["name"] = name
        with open(self.path(name), "w") as f:
            json.dump(data, f, indent=2)
        logger.info(f"Saved config {name}")
        return True

    def load(self, name: Optional[str]) -> Optional[PricingConfig]:
        if not name or not os.path.exists(self.path(name)):
            return None
        return load_config(self.path(name))

    def delete(self, name: str) -> bool:
        if not name:
            return False
        path = self.path(name)
        if os.path.exists(path):
            os.remove(path)
            return True
        return False

    def import_file(self, src_path: str, name: Optional[str] = None) -> str:
        """Validate a job file and store it; returns the stored name"""
        config = load_config(src_path)
        cfg_name = name or config.name or os.path.splitext(os.path.basename(src_path))[0]
        self.save(cfg_name, config)
        return cfg_name
