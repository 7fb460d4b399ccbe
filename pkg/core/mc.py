"""
Monte Carlo oracle for the grid engines: local vol (1-3 assets), Heston and the
Hull-White hybrid, all by Euler stepping in log space.

Paths are simulated in fixed-size chunks. Chunk generators are spawned from one
SeedSequence and partial statistics are merged in chunk order, so an estimate only
depends on the seed, never on the thread count.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.engine_nd import cholesky3, correlation_function
from core.errors import ParameterError
from core.hybrid import HestonParams, HullWhiteParams, hw_phi_integral
from core.market import LocalVolSurface, YieldCurve, dupire_local_vol, forward_price
from core.payoffs import MultiPayoff, Payoff

logger = logging.getLogger(__name__)

CHUNK_PATHS = 20_000
LV_TABLE_POINTS = 801
LV_TABLE_STDEVS = 8.0
THREADS_ENV = "ODGRID_THREADS"


@dataclass(frozen=True)
class McConfig:
    paths: int = 500_000
    steps_per_year: int = 100
    seed: int = 20240101
    antithetic: bool = True
    threads: Optional[int] = None

    def __post_init__(self):
        if self.paths < 2:
            raise ParameterError(f"Monte Carlo needs at least 2 paths, got {self.paths}")
        if self.antithetic and self.paths % 2:
            raise ParameterError(f"antithetic sampling needs an even path count, got {self.paths}")
        if self.steps_per_year < 1:
            raise ParameterError(f"steps_per_year must be positive, got {self.steps_per_year}")
        if self.threads is not None and self.threads < 1:
            raise ParameterError(f"thread count must be positive, got {self.threads}")

    def resolve_threads(self) -> int:
        if self.threads:
            return int(self.threads)
        try:
            return max(1, int(os.environ.get(THREADS_ENV, "1")))
        except ValueError:
            logger.warning(f"ignoring non-integer {THREADS_ENV}={os.environ.get(THREADS_ENV)!r}")
            return 1

    def time_grid(self, maturity: float) -> Tuple[int, float]:
        steps = max(1, int(np.ceil(self.steps_per_year * maturity - 1e-9)))
        return steps, maturity / steps


@dataclass(frozen=True)
class McResult:
    estimate: float
    stderr: float
    paths: int
    elapsed: float = 0.0


# chunk statistics: (count, mean, sum of squared deviations)
ChunkStats = Tuple[int, float, float]


def _chunk_stats(samples: np.ndarray) -> ChunkStats:
    mean = float(samples.mean())
    return samples.size, mean, float(np.sum((samples - mean) ** 2))


def _merge(a: ChunkStats, b: ChunkStats) -> ChunkStats:
    n = a[0] + b[0]
    delta = b[1] - a[1]
    mean = a[1] + delta * b[0] / n
    return n, mean, a[2] + b[2] + delta * delta * a[0] * b[0] / n


def run_chunks(cfg: McConfig, simulate: Callable[[np.random.Generator, int], np.ndarray]) -> McResult:
    """
    Drive `simulate(rng, n_paths)`, which returns one discounted payoff per path
    (paths 2i and 2i+1 antithetic partners when cfg.antithetic).
    """
    start = time.perf_counter()
    sizes = [CHUNK_PATHS] * (cfg.paths // CHUNK_PATHS)
    if cfg.paths % CHUNK_PATHS:
        sizes.append(cfg.paths % CHUNK_PATHS)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))

    def work(index: int) -> ChunkStats:
        samples = simulate(np.random.default_rng(seeds[index]), sizes[index])
        if cfg.antithetic:
            samples = 0.5 * (samples[0::2] + samples[1::2])
        return _chunk_stats(samples)

    threads = cfg.resolve_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stats = list(pool.map(work, range(len(sizes))))
    else:
        stats = [work(i) for i in range(len(sizes))]

    total = stats[0]
    for part in stats[1:]:
        total = _merge(total, part)
    n, mean, m2 = total
    stderr = float(np.sqrt(m2 / (n - 1) / n)) if n > 1 else 0.0
    elapsed = time.perf_counter() - start
    logger.info(f"Monte Carlo: {cfg.paths} paths in {len(sizes)} chunks on {threads} thread(s), "
                f"{mean:.6f} +/- {stderr:.6f}, {elapsed:.3f}s")
    return McResult(mean, stderr, cfg.paths, elapsed)


def normals(rng: np.random.Generator, n_paths: int, dims: int, antithetic: bool) -> np.ndarray:
    """Standard normals shaped (n_paths, dims); antithetic partners sit in adjacent rows"""
    if not antithetic:
        return rng.standard_normal((n_paths, dims))
    half = rng.standard_normal((n_paths // 2, dims))
    out = np.empty((n_paths, dims))
    out[0::2] = half
    out[1::2] = -half
    return out


def correlation_root(matrix: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of a 1-3 asset correlation matrix"""
    dims = matrix.shape[0]
    if dims == 1:
        return np.ones((1, 1))
    if dims == 2:
        rho = matrix[0, 1]
        return np.array([[1.0, 0.0], [rho, np.sqrt(max(1.0 - rho * rho, 0.0))]])
    if dims == 3:
        return cholesky3(matrix[0, 1], matrix[0, 2], matrix[1, 2]).matrix()
    raise ParameterError(f"Monte Carlo supports 1 to 3 assets, got {dims}")


def _payoff_values(payoff: Union[Payoff, MultiPayoff], x: List[np.ndarray], spots: List[np.ndarray]) -> np.ndarray:
    if isinstance(payoff, MultiPayoff):
        return payoff.values(spots)
    return payoff.values(x[0], spots[0])


# ---------------------------------------------------------------------------
# Local vol
# ---------------------------------------------------------------------------

class LocalVolTable:
    """Local vol per time step on a fine state grid, read by linear interpolation"""

    def __init__(self, lv: LocalVolSurface, curve: YieldCurve, times: np.ndarray, maturity: float):
        width = LV_TABLE_STDEVS * float(np.asarray(lv.surface.atm_vol(maturity))) * np.sqrt(maturity)
        self.xs = np.linspace(-width, width, LV_TABLE_POINTS)
        self.rows = np.array([dupire_local_vol(lv, forward_price(curve, lv.spot, t) * np.exp(self.xs), t)
                              for t in times])

    def __call__(self, step: int, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.xs, self.rows[step])


def mc_price_lv(assets: Sequence[Union[LocalVolSurface, float]], correlation, payoff: Union[Payoff, MultiPayoff],
                maturity: float, cfg: McConfig, curve: Optional[YieldCurve] = None,
                spots: Optional[Sequence[float]] = None) -> McResult:
    """
    Correlated log-Euler paths of 1-3 assets. An asset is a local vol surface or a
    constant vol; constant-vol assets take their spot from `spots` (default 100).
    """
    dims = len(assets)
    curve = curve or YieldCurve.flat(0.0)
    matrix = np.ones((1, 1)) if dims == 1 else correlation_function(correlation, dims)(0.0)
    root = correlation_root(matrix)
    n_steps, dt = cfg.time_grid(maturity)
    times = np.arange(n_steps) * dt

    vols: List[Callable[[int, np.ndarray], np.ndarray]] = []
    spot_levels: List[float] = []
    for i, asset in enumerate(assets):
        if isinstance(asset, LocalVolSurface):
            vols.append(LocalVolTable(asset, curve, times, maturity))
            spot_levels.append(asset.spot)
        else:
            sigma = float(asset)
            vols.append(lambda step, x, s=sigma: np.full(x.shape, s))
            spot_levels.append(float(spots[i]) if spots is not None else 100.0)
    forwards_t = [float(forward_price(curve, s, maturity)) for s in spot_levels]
    discount = curve.discount(maturity)

    def simulate(rng: np.random.Generator, n_paths: int) -> np.ndarray:
        x = [np.zeros(n_paths) for _ in range(dims)]
        for step in range(n_steps):
            z = normals(rng, n_paths, dims, cfg.antithetic) @ root.T
            for i in range(dims):
                sigma = vols[i](step, x[i])
                x[i] = x[i] - 0.5 * sigma * sigma * dt + sigma * np.sqrt(dt) * z[:, i]
        spots_t = [f * np.exp(xi) for f, xi in zip(forwards_t, x)]
        return discount * _payoff_values(payoff, x, spots_t)

    return run_chunks(cfg, simulate)


def mc_price_heston(heston: HestonParams, payoff: Payoff, maturity: float, cfg: McConfig,
                    spot: float = 100.0, curve: Optional[YieldCurve] = None) -> McResult:
    """Full-truncation Euler: the variance enters drift and diffusion through max(v, 0)"""
    curve = curve or YieldCurve.flat(0.0)
    n_steps, dt = cfg.time_grid(maturity)
    sqrt_dt = np.sqrt(dt)
    orth = np.sqrt(max(1.0 - heston.rho_sv ** 2, 0.0))
    forward_t = float(forward_price(curve, spot, maturity))
    discount = curve.discount(maturity)

    def simulate(rng: np.random.Generator, n_paths: int) -> np.ndarray:
        x = np.zeros(n_paths)
        v = np.full(n_paths, heston.v0)
        for _ in range(n_steps):
            z = normals(rng, n_paths, 2, cfg.antithetic)
            v_pos = np.maximum(v, 0.0)
            root_v = np.sqrt(v_pos)
            x = x - 0.5 * v_pos * dt + root_v * sqrt_dt * z[:, 0]
            v = v + heston.k_v * (heston.v_bar - v_pos) * dt \
                + heston.sigma_v * root_v * sqrt_dt * (heston.rho_sv * z[:, 0] + orth * z[:, 1])
        return discount * payoff.values(x, forward_t * np.exp(x))

    return run_chunks(cfg, simulate)


def mc_price_hybrid_hw(curve: YieldCurve, hw: HullWhiteParams, sigma_s: float, payoff: Payoff,
                       maturity: float, cfg: McConfig, spot: float = 100.0) -> McResult:
    """Joint Euler on ln(S/spot) and the rate factor, discounting along each path"""
    n_steps, dt = cfg.time_grid(maturity)
    sqrt_dt = np.sqrt(dt)
    orth = np.sqrt(max(1.0 - hw.rho_sr ** 2, 0.0))
    phi_steps = [hw_phi_integral(curve, hw, n * dt, (n + 1) * dt) for n in range(n_steps)]

    def simulate(rng: np.random.Generator, n_paths: int) -> np.ndarray:
        x1 = np.zeros(n_paths)
        x2 = np.zeros(n_paths)
        log_discount = np.zeros(n_paths)
        for step in range(n_steps):
            z = normals(rng, n_paths, 2, cfg.antithetic)
            rate_dt = x2 * dt + phi_steps[step]
            log_discount += rate_dt
            x1 = x1 + rate_dt - 0.5 * sigma_s * sigma_s * dt + sigma_s * sqrt_dt * z[:, 0]
            x2 = x2 - hw.k * x2 * dt + hw.sigma_r * sqrt_dt * (hw.rho_sr * z[:, 0] + orth * z[:, 1])
        return np.exp(-log_discount) * payoff.values(x1, spot * np.exp(x1))

    return run_chunks(cfg, simulate)


def asset_claim() -> Payoff:
    """Pays the asset itself; its discounted price is the spot for every martingale model"""
    return Payoff(lambda x, s: s, name="asset")


def mc_discounted_asset_mean(model: str, maturity: float, cfg: McConfig, **params) -> McResult:
    """
    Discounted mean of S(T) under one of the simulated models.

    model: "lv" (params: assets, correlation, curve, spots; first asset is paid),
    "heston" (heston, spot, curve) or "hw" (curve, hw, sigma_s, spot).
    """
    if model == "lv":
        assets = params["assets"]
        claim = asset_claim() if len(assets) == 1 else MultiPayoff(lambda spots: spots[0], name="asset 1")
        return mc_price_lv(assets, params.get("correlation", 0.0), claim, maturity, cfg,
                           params.get("curve"), params.get("spots"))
    if model == "heston":
        return mc_price_heston(params["heston"], asset_claim(), maturity, cfg,
                               params.get("spot", 100.0), params.get("curve"))
    if model == "hw":
        return mc_price_hybrid_hw(params["curve"], params["hw"], params["sigma_s"], asset_claim(),
                                  maturity, cfg, params.get("spot", 100.0))
    raise ParameterError(f"unknown Monte Carlo model {model!r}")
